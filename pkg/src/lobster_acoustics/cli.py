"""Command-line entry point: ``lobster-ac <command> [--config FILE] [--seed N] [--out DIR] [--jobs N]``.

Exit codes: 0 success, 1 validation error (bad config, bad fixture schema,
rank mismatch), 2 data error (unreadable audio/manifest, infeasible split),
3 convergence or training failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .evaluation.metrics import MetricTableError
from .evaluation.ranking import format_rank_csv, rank_text_table, reproduce_all
from .evaluation.split import SplitError
from .ingest import IngestError
from .learners.base import TrainingError

EXIT_OK, EXIT_VALIDATION, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3

STAGE_HELP = {
    "synth": "generate the synthetic dataset and write WAV files plus manifest.csv",
    "features": "filter, SNR-screen and extract time-averaged MFCC features for each mfcc_dims entry",
    "train": "grid-search each model family on the training individuals and refit the winner",
    "evaluate": "score held-out individuals: metric CSV, confusion matrices, McNemar+BH, bootstrap AUC, ranks",
    "stack": "out-of-fold stacking (default bases rf, gbt, svm, cnn) and the average/majority/stacked ablation",
    "bench": "per-sample median inference time for every trained model",
    "run": "features, train, evaluate, stack and bench in sequence",
}

CONFIG_HELP = """\
config keys (YAML or JSON; flags override file values):
  seed                      master seed for data, split and models (default 42)
  tasks                     [age, sex]; positive classes juvenile / female by default
  mfcc_dims                 subset of 40/50/60 coefficients, time-averaged per 1 s segment
  dataset.source            synthetic | manifest (CSV path,individual_id,sex,age)
  dataset.synthetic.*       seed, n_per_class, individuals_per_class (6 per group), codec, profiles
  preprocessing.*           highpass_hz (20-50), band_hz [50, 8000], orders, snr_threshold_db (6),
                            snr_percentile (10)
  split.test_fraction       share of individuals per sex x age stratum held out (0.2)
  models.families           knn svm rf gbt nb mlp cnn
  models.grids.<family>     {param: [values]} using the architecture-table names
                            (n_neighbors, p, weights, C, gamma, max_depth, ...)
  models.cnn_variants       1D-CNN / 1D-DCNN with 1-4 layers
  models.cv_folds           K for grouped stratified CV (5)
  evaluation.record_timing  put IT into the metric CSV (off keeps CSVs byte-reproducible)
  stacking.*                bases, folds, meta_l2, mfcc_dim
  bench.*                   repeats (30), warmup (1), mfcc_dim
"""


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", help="output root; artifacts go to <out>/<run_id>")
    p.add_argument("--jobs", type=int, help="worker processes for independent model fits")
    p.add_argument("--quiet", action="store_true", help="do not echo key=value log lines to stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lobster-ac", description=__doc__.split("\n")[0],
                                 epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in STAGE_HELP.items():
        _common(sub.add_parser(name, help=text, description=text))
    rr = sub.add_parser("reproduce-ranks", help="rebuild the four reference rank tables from the shipped "
                        "metric fixtures and compare cell by cell")
    rr.add_argument("--fixtures", help="directory holding index.json and the fixture CSVs")
    rr.add_argument("--tie-method", default="floor_average",
                    choices=["floor_average", "min", "average", "dense", "max"])
    rr.add_argument("--out", help="also write the computed rank CSVs here")
    return ap


def cmd_reproduce_ranks(args) -> int:
    results = reproduce_all(args.fixtures, args.tie_method)
    bad = 0
    for name, (ranks, mismatches) in results.items():
        print(rank_text_table(ranks, f"{name}"))
        if args.out:
            from .experiment import write_atomic
            write_atomic(Path(args.out) / f"ranking_{name}.csv", format_rank_csv(ranks))
        for m in mismatches:
            print(f"MISMATCH {m}")
        print(f"{name}: {'OK' if not mismatches else f'{len(mismatches)} mismatching cell(s)'}")
        bad += len(mismatches)
    return EXIT_OK if bad == 0 else EXIT_VALIDATION


def cmd_stage(args) -> int:
    from .experiment import Run, stage_run

    cfg = load_config(args.config, seed=args.seed, out=args.out, jobs=args.jobs)
    run = Run(cfg, quiet=args.quiet)
    stages = ("features", "train", "evaluate", "stack", "bench") if args.command == "run" \
        else (args.command,)
    stage_run(run, stages)
    print(run.dir)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce-ranks":
            return cmd_reproduce_ranks(args)
        return cmd_stage(args)
    except (ConfigError, MetricTableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (IngestError, SplitError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
