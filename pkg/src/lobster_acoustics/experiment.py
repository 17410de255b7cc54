"""Batch experiment stages: synth, features, train, evaluate, stack, bench.

Every stage reads its inputs from (and writes its outputs to) one run
directory ``<out>/<run_id>``.  Stages that find their inputs missing compute
them first, so any stage can be run on its own.  All writes go through
:func:`write_atomic` in the parent process.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import canonical_json, run_id, split_seed, synth_seed
from .dsp import PreprocessChain, SnrPolicy, snr_screen
from .evaluation import (apply_bh, bootstrap_auc_diff, calibration_report, evaluate_predictions,
                         format_metric_csv, group_stratified_split, mcnemar, measure_inference_time,
                         metric_text_table, rank_summary, rank_text_table, select_best_rows,
                         stratified_kfold, timing_table)
from .evaluation.ranking import RANK_CSV_HEADER
from .evaluation.split import SplitPlan, assert_split_hygiene
from .evaluation.stacking import ablation_rows, stack_fit
from .features import (FeatureMatrix, MfccConfig, extract_features, features_from_bytes,
                       features_to_bytes)
from .ingest import (AudioSegment, default_profiles, generate_synthetic_dataset, load_manifest,
                     profiles_from_config, write_synthetic_dataset)
from .learners import ModelPipeline, grid_search, make_pipeline, preset
from .learners.pipeline import PRESET_COMPONENTS, canonical_params
from .neural import CNNClassifier, default_spec

DISPLAY = {"knn": "KNN", "svm": "SVM", "rf": "RF", "gbt": "XGBoost", "nb": "NB", "mlp": "MLP"}
POSITIVE = {"age": {"juvenile": "Juvenile", "adult": "Adult"},
            "sex": {"female": "Female", "male": "Male"}}

log = logging.getLogger("lobster_acoustics")


# ------------------------------------------------------------------ plumbing

def kv(event: str, **fields) -> str:
    parts = [f"event={event}"]
    for k, v in fields.items():
        s = str(v)
        parts.append(f"{k}={json.dumps(s) if (' ' in s or '=' in s or not s) else s}")
    return " ".join(parts)


def write_atomic(path: Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    if isinstance(data, str):
        data = data.encode()
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path


def write_json(path, obj):
    return write_atomic(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def derive_seed(master: int, *labels) -> int:
    """Independent per-task seed from the master seed and a task label."""
    h = hashlib.sha256(f"{master}|{'|'.join(map(str, labels))}".encode()).digest()
    return int.from_bytes(h[:4], "little")


class Run:
    """A run directory plus its config and log."""

    def __init__(self, cfg: dict, quiet: bool = False):
        self.cfg = cfg
        self.id = run_id(cfg)
        self.dir = Path(cfg["out"]) / self.id
        self.dir.mkdir(parents=True, exist_ok=True)
        self._logfile = self.dir / "run.log"
        self.quiet = quiet
        write_json(self.dir / "config.json", {"run_id": self.id, "version": __version__,
                                              "config": cfg})

    def log(self, event, **fields):
        line = kv(event, run=self.id, **fields)
        with open(self._logfile, "a") as fh:
            fh.write(line + "\n")
        if not self.quiet:
            print(line, file=sys.stderr)

    def path(self, *parts) -> Path:
        return self.dir.joinpath(*parts)

    def header(self, task=None) -> dict:
        h = {"run_id": self.id, "version": __version__, "seed": self.cfg["seed"]}
        if task:
            h["task"] = task
            h["positive_class"] = POSITIVE[task][self.cfg["positive_class"][task]]
        return h


# ------------------------------------------------------------------- dataset

def load_segments(cfg) -> list[AudioSegment]:
    ds = cfg["dataset"]
    if ds["source"] == "manifest":
        return load_manifest(ds["manifest"], ds["sample_rate"]).load_segments()
    syn = ds["synthetic"]
    profiles = profiles_from_config(syn["profiles"]) if syn["profiles"] else default_profiles()
    return generate_synthetic_dataset(profiles, syn["n_per_class"], synth_seed(cfg),
                                      ds["sample_rate"], syn["individuals_per_class"])


def stage_synth(run: Run) -> Path:
    cfg = run.cfg
    segs = load_segments(cfg)
    manifest = write_synthetic_dataset(segs, run.path("data"), cfg["dataset"]["synthetic"]["codec"])
    n_files = len(list(run.path("data", "audio").glob("*.wav")))
    run.log("synth", segments=len(segs), files=n_files, manifest=manifest)
    return manifest


def preprocess_chain(cfg, sample_rate) -> PreprocessChain:
    p = cfg["preprocessing"]
    return PreprocessChain.build(sample_rate, p["highpass_hz"], p["highpass_order"],
                                 tuple(p["band_hz"]), p["bandpass_order"])


def mfcc_config(cfg, dim, sample_rate) -> MfccConfig:
    m = cfg["mfcc"]
    return MfccConfig(n_mfcc=dim, n_fft=m["n_fft"], hop=m["hop"], n_mels=m["n_mels"], fmin=m["fmin"],
                      fmax=m["fmax"], sample_rate=sample_rate)


def stage_features(run: Run) -> dict:
    cfg = run.cfg
    segs = load_segments(cfg)
    if not segs:
        raise ValueError("dataset produced no segments")
    sr = segs[0].sample_rate
    chain = preprocess_chain(cfg, sr)
    filtered = [replace(s, samples=chain(s.samples, sr)) for s in segs]
    policy = SnrPolicy(cfg["preprocessing"]["snr_threshold_db"], cfg["preprocessing"]["snr_percentile"])
    kept, discarded, floor_db = snr_screen(filtered, policy)
    by_stratum = {}
    for s in discarded:
        by_stratum[s.label] = by_stratum.get(s.label, 0) + 1
    run.log("snr_screen", total=len(segs), kept=len(kept), discarded=len(discarded),
            floor_db=f"{floor_db:.4f}")
    summary = {"segments": len(segs), "kept": len(kept), "discarded": len(discarded),
               "discarded_by_stratum": dict(sorted(by_stratum.items())), "floor_db": floor_db,
               "files": {}}
    for dim in cfg["mfcc_dims"]:
        fm = extract_features(kept, mfcc_config(cfg, dim, sr))
        p = write_atomic(run.path("features", f"mfcc{dim}.lbfm"), features_to_bytes(fm))
        summary["files"][str(dim)] = p.name
        run.log("features", mfcc=dim, rows=len(fm), cols=fm.dim)
    write_json(run.path("features", "summary.json"), summary)
    return summary


def load_features(run: Run, dim: int) -> FeatureMatrix:
    p = run.path("features", f"mfcc{dim}.lbfm")
    if not p.exists():
        stage_features(run)
    return features_from_bytes(p.read_bytes())


def get_split(run: Run) -> SplitPlan:
    p = run.path("split.json")
    if p.exists():
        d = json.loads(p.read_text())
        return SplitPlan(frozenset(d["train_groups"]), frozenset(d["test_groups"]), d["seed"],
                         d["fractions"][1])
    fm = load_features(run, run.cfg["mfcc_dims"][0])
    plan = group_stratified_split(fm, test_fraction=run.cfg["split"]["test_fraction"],
                                  seed=split_seed(run.cfg))
    assert_split_hygiene(plan.train_groups, plan.test_groups)
    write_json(p, plan.to_dict())
    run.log("split", train_individuals=len(plan.train_groups), test_individuals=len(plan.test_groups))
    return plan


def task_labels(fm: FeatureMatrix, task: str, positive: str) -> np.ndarray:
    """1 for the positive class of ``task``; stratum labels look like 'F-juvenile'."""
    out = []
    for lab in fm.labels:
        sex, age = str(lab).split("-", 1)
        value = age.lower() if task == "age" else ("female" if sex.upper().startswith("F") else "male")
        out.append(1 if value == positive else 0)
    return np.array(out, dtype=np.int64)


class TaskData:
    def __init__(self, run: Run, task: str, dim: int):
        fm = load_features(run, dim)
        plan = get_split(run)
        tr, te = plan.masks(fm.groups)
        y = task_labels(fm, task, run.cfg["positive_class"][task])
        self.X_train, self.y_train, self.g_train = fm.rows[tr], y[tr], fm.groups[tr]
        self.X_test, self.y_test = fm.rows[te], y[te]


# -------------------------------------------------------------------- models

def model_list(cfg) -> list[tuple[str, str]]:
    """(family, model id) pairs in report order."""
    out = []
    for fam in cfg["models"]["families"]:
        if fam == "cnn":
            out += [("cnn", v) for v in cfg["models"]["cnn_variants"]]
        else:
            out.append((fam, DISPLAY[fam]))
    return out


def slug(model_id: str) -> str:
    return model_id.lower().replace(" ", "_").replace("-", "")


def cnn_spec(cfg, model_id: str, dim: int):
    kind, n = model_id.split()
    n_layers = int(n.rstrip("L"))
    length = 30 if cfg["models"]["cnn_input"] == "pca30" else dim
    spec = default_spec(n_layers, dim, dilated=kind == "1D-DCNN", input_length=length)
    if cfg["models"]["cnn_epochs"]:
        spec = replace(spec, epochs=int(cfg["models"]["cnn_epochs"]))
    return spec


def cnn_pipeline(cfg, model_id, dim, seed) -> ModelPipeline:
    n_comp = 30 if cfg["models"]["cnn_input"] == "pca30" else None
    return ModelPipeline(CNNClassifier.from_spec(cnn_spec(cfg, model_id, dim), seed), n_comp)


def family_components(cfg, fam):
    return cfg["models"]["n_components"].get(fam, PRESET_COMPONENTS.get(fam))


def full_grid(cfg, fam, dim) -> dict:
    grid = canonical_params(cfg["models"]["grids"].get(fam, {}))
    base = preset(fam, dim)
    base.update(canonical_params(cfg["models"]["params"].get(fam, {})))
    out = dict(grid) if cfg["models"]["grid_search"] else {}
    for k, v in base.items():
        out.setdefault(k, [v])
    return out


def train_job(cfg, task, dim, fam, model_id, data) -> dict:
    """Fit one model; pure function of its inputs (runs in worker processes)."""
    X, y, groups = data
    seed = derive_seed(cfg["seed"], task, dim, model_id)
    t0 = time.perf_counter()
    grid_report = None
    if fam == "cnn":
        pipe = cnn_pipeline(cfg, model_id, dim, seed).fit(X, y)
        params = pipe.model.get_params()
    else:
        grid = full_grid(cfg, fam, dim)
        folds = stratified_kfold(y, cfg["models"]["cv_folds"], seed, groups)
        res = grid_search(fam, grid, X, y, folds, seed, family_components(cfg, fam))
        params = res.best_params
        grid_report = {"best_params": params, "best_index": res.best_index,
                       "best_cv_accuracy": res.best_score, "grid_time_s": res.wall_time_s,
                       "table": res.table}
        pipe = make_pipeline(fam, params, family_components(cfg, fam), seed).fit(X, y)
    fit_s = time.perf_counter() - t0
    return {"task": task, "dim": dim, "family": fam, "model": model_id, "seed": seed,
            "model_json": pipe.to_json(cfg["models"]["serialize_arrays"], seed=seed),
            "grid": grid_report, "fit_s": fit_s, "tev": pipe.tev}


def _pool_map(cfg, fn, jobs):
    if cfg["jobs"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as ex:
            futures = [ex.submit(fn, *j) for j in jobs]
            return [f.result() for f in futures]
    return [fn(*j) for j in jobs]


def model_path(run, task, dim, model_id) -> Path:
    return run.path("models", task, f"mfcc{dim}", slug(model_id) + ".json")


def stage_train(run: Run) -> list[dict]:
    cfg = run.cfg
    jobs = []
    for task in cfg["tasks"]:
        for dim in cfg["mfcc_dims"]:
            d = TaskData(run, task, dim)
            for fam, mid in model_list(cfg):
                jobs.append((cfg, task, dim, fam, mid, (d.X_train, d.y_train, d.g_train)))
    results = _pool_map(cfg, train_job, jobs)
    for r in results:
        write_atomic(model_path(run, r["task"], r["dim"], r["model"]), r["model_json"])
        if r["grid"] is not None:
            write_json(run.path("grids", r["task"], f"mfcc{r['dim']}", slug(r["model"]) + ".json"),
                       {"model": r["model"], "family": r["family"], **r["grid"]})
            for row in r["grid"]["table"]:
                run.log("grid_cell", task=r["task"], mfcc=r["dim"], model=r["model"], cell=row["index"],
                        mean_acc=f"{row['mean_accuracy']:.6f}")
        run.log("trained", task=r["task"], mfcc=r["dim"], model=r["model"], seed=r["seed"],
                tev=f"{r['tev']:.4f}", fit_s=f"{r['fit_s']:.3f}")
    return results


def load_model(run, task, dim, model_id) -> ModelPipeline:
    p = model_path(run, task, dim, model_id)
    if not p.exists():
        stage_train(run)
    return ModelPipeline.from_json(p.read_text())


# ---------------------------------------------------------------- evaluation

def _bench(cfg, pipe, X):
    b = cfg["bench"]
    return measure_inference_time(pipe, X, b["warmup"], b["repeats"])


def evaluate_task(run: Run, task: str) -> dict:
    cfg = run.cfg
    rows, preds, scores = [], {}, {}
    y_test = None
    for dim in cfg["mfcc_dims"]:
        d = TaskData(run, task, dim)
        y_test = d.y_test
        if len(np.unique(d.y_test)) < 2:
            raise ValueError(f"task {task}: test side holds a single class")
        for fam, mid in model_list(cfg):
            pipe = load_model(run, task, dim, mid)
            p1 = pipe.predict_proba(d.X_test)[:, 1]
            yhat = pipe.predict(d.X_test)
            it = _bench(cfg, pipe, d.X_test).median_ms if cfg["evaluation"]["record_timing"] else None
            row = evaluate_predictions(mid, dim, d.y_test, yhat, p1, it_ms=it)
            rows.append(row)
            preds[(mid, dim)], scores[(mid, dim)] = yhat, p1
            run.log("evaluated", task=task, mfcc=dim, model=mid, accuracy=f"{row.accuracy:.4f}",
                    auc=f"{row.auc_roc:.4f}")
    order = {mid: i for i, (_, mid) in enumerate(model_list(cfg))}
    rows.sort(key=lambda r: (order[r.model], r.mfcc))
    write_atomic(run.path("metrics", f"{task}_metrics.csv"), format_metric_csv(rows))
    write_atomic(run.path("metrics", f"{task}_metrics.txt"),
                 metric_text_table(rows, _title(run, task, "metrics")))
    write_json(run.path("metrics", f"{task}_confusion.json"),
               {"header": run.header(task), "labels": ["negative", "positive"],
                "layout": "[[TN, FP], [FN, TP]]",
                "rows": [{"model": r.model, "mfcc": r.mfcc, "confusion": r.confusion,
                          "flags": list(r.flags)} for r in rows]})

    best = select_best_rows(rows)
    timed = all(r.it_ms is not None for r in best)
    fields = ["accuracy", "precision", "recall", "f1", "auc_roc"] + (["it_ms"] if timed else [])
    ranks = rank_summary(best, fields=fields)
    write_atomic(run.path("ranks", f"{task}_ranks.csv"), _rank_csv(ranks, timed))
    write_atomic(run.path("ranks", f"{task}_ranks.txt"),
                 rank_text_table(ranks, _title(run, task, "ranks" + ("" if timed else " (no IT)"))))

    tests = []
    keys = [(r.model, r.mfcc) for r in best]
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            res = mcnemar(preds[keys[i]], preds[keys[j]], y_test)
            res.details.update({"model_a": keys[i][0], "model_b": keys[j][0]})
            tests.append(res)
    apply_bh(tests)
    top = sorted(best, key=lambda r: (-r.accuracy, order[r.model]))[:cfg["evaluation"]["bootstrap_top"]]
    boot = []
    if len(top) == 2:
        a, b = ((r.model, r.mfcc) for r in top)
        res = bootstrap_auc_diff(scores[a], scores[b], y_test, cfg["evaluation"]["n_boot"],
                                 derive_seed(cfg["seed"], task, "bootstrap"))
        res.details.update({"model_a": a[0], "model_b": b[0]})
        boot.append(res)
        run.log("bootstrap", task=task, a=a[0], b=b[0], redrawn=res.details["redrawn"])
    write_json(run.path("stats", f"{task}_tests.json"),
               {"header": run.header(task), "mcnemar": [t.to_dict() for t in tests],
                "bootstrap_auc": [t.to_dict() for t in boot]})
    return {"rows": rows, "ranks": ranks, "tests": tests, "bootstrap": boot}


def _title(run, task, what):
    h = run.header(task)
    return f"{what}: task={task} positive={h['positive_class']} seed={h['seed']} run={h['run_id']}"


def _rank_csv(ranks, timed) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RANK_CSV_HEADER)
    for r in ranks:
        cells = r.cells()
        if not timed:
            cells = cells[:-1] + [""] + cells[-1:]
        w.writerow(cells)
    return out.getvalue()


def stage_evaluate(run: Run) -> dict:
    return {task: evaluate_task(run, task) for task in run.cfg["tasks"]}


# ------------------------------------------------------------------ stacking

def _base_pipeline(run, task, dim, fam):
    """Unfitted clone of the trained model for ``fam`` (first CNN variant for cnn)."""
    cfg = run.cfg
    if fam == "cnn":
        mid = cfg["models"]["cnn_variants"][0] if cfg["models"]["cnn_variants"] else "1D-CNN 1L"
    else:
        mid = DISPLAY[fam]
    if (fam, mid) in model_list(cfg):
        pipe = load_model(run, task, dim, mid).clone()
    elif fam == "cnn":
        pipe = cnn_pipeline(cfg, mid, dim, derive_seed(cfg["seed"], task, dim, mid))
    else:
        params = preset(fam, dim)
        params.update(canonical_params(cfg["models"]["params"].get(fam, {})))
        pipe = make_pipeline(fam, params, family_components(cfg, fam),
                             derive_seed(cfg["seed"], task, dim, mid))
    pipe.name = mid
    return pipe


def stage_stack(run: Run) -> dict:
    cfg = run.cfg
    st = cfg["stacking"]
    dim = st["mfcc_dim"] or cfg["mfcc_dims"][0]
    out = {}
    for task in cfg["tasks"]:
        d = TaskData(run, task, dim)
        bases = [_base_pipeline(run, task, dim, fam) for fam in st["bases"]]
        t0 = time.perf_counter()
        stacked = stack_fit(bases, d.X_train, d.y_train, st["folds"],
                            derive_seed(cfg["seed"], task, "stack"), groups=d.g_train,
                            meta_l2=st["meta_l2"])
        rows = ablation_rows(stacked, d.X_test, d.y_test)
        cal = calibration_report(stacked.predict_proba(d.X_test)[:, 1], d.y_test)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["combiner", "accuracy"])
        for r in rows:
            w.writerow([r["combiner"], f"{r['accuracy']:.4f}"])
        write_atomic(run.path("stack", f"{task}_ablation.csv"), buf.getvalue())
        write_json(run.path("stack", f"{task}_stack.json"),
                   {"header": run.header(task), "mfcc": dim, "bases": stacked.oof.learners,
                    "folds": st["folds"], "meta": stacked.meta.to_dict(),
                    "bases_fitted": [json.loads(b.to_json()) for b in stacked.bases],
                    "calibration": cal.to_dict(), "ablation": rows})
        for r in rows:
            run.log("ablation", task=task, combiner=r["combiner"], accuracy=f"{r['accuracy']:.4f}")
        run.log("stacked", task=task, mfcc=dim, fit_s=f"{time.perf_counter() - t0:.3f}",
                brier=f"{cal.brier:.6f}")
        out[task] = {"ablation": rows, "calibration": cal, "model": stacked}
    return out


# --------------------------------------------------------------------- bench

def stage_bench(run: Run) -> list:
    cfg = run.cfg
    dim = cfg["bench"]["mfcc_dim"] or cfg["mfcc_dims"][0]
    task = cfg["tasks"][0]
    d = TaskData(run, task, dim)
    reports = []
    for _, mid in model_list(cfg):
        rep = _bench(cfg, load_model(run, task, dim, mid), d.X_test)
        rep.model = mid
        reports.append(rep)
        run.log("bench", model=mid, mfcc=dim, median_ms=f"{rep.median_ms:.6f}",
                iqr_ms=f"{rep.iqr_ms:.6f}", coarse_timer=rep.coarse_timer)
    write_json(run.path("bench", "timing.json"),
               {"header": run.header(task), "mfcc": dim, "n_samples": len(d.X_test),
                "environment": reports[0].env if reports else {},
                "reports": [r.to_dict() for r in reports], "ordering": timing_table(reports)})
    return reports


def stage_run(run: Run, stages=("features", "train", "evaluate", "stack", "bench")) -> dict:
    done = {}
    fns = {"synth": stage_synth, "features": stage_features, "train": stage_train,
           "evaluate": stage_evaluate, "stack": stage_stack, "bench": stage_bench}
    for s in stages:
        if s == "stack" and not run.cfg["stacking"]["enabled"]:
            continue
        t0 = time.perf_counter()
        done[s] = fns[s](run)
        run.log("stage_done", stage=s, seconds=f"{time.perf_counter() - t0:.2f}")
    return done


__all__ = ["Run", "stage_synth", "stage_features", "stage_train", "stage_evaluate", "stage_stack",
           "stage_bench", "stage_run", "load_segments", "task_labels", "model_list", "kv",
           "write_atomic", "derive_seed", "canonical_json"]
