"""Per-metric rank tables with an average rank, and the shipped reference tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .metrics import MetricRow, MetricTableError, parse_metric_csv

RANK_FIELDS = ["accuracy", "precision", "recall", "f1", "auc_roc", "it_ms"]
RANK_COLUMNS = ["acc_rank", "prec_rank", "rec_rank", "f1_rank", "auc_rank", "it_rank"]
RANK_CSV_HEADER = ["model", "mfcc"] + RANK_COLUMNS + ["avg_rank"]
TIE_METHODS = ("floor_average", "min", "average", "dense", "max")


@dataclass
class RankRow:
    model: str
    mfcc: int
    ranks: tuple
    avg_rank: float

    def cells(self):
        return [self.model, str(self.mfcc)] + [_fmt_rank(r) for r in self.ranks] + [f"{self.avg_rank:.2f}"]


def _fmt_rank(r):
    return str(int(r)) if float(r).is_integer() else f"{r:.1f}"


def rank_column(values, descending: bool, method: str = "floor_average") -> np.ndarray:
    """Rank 1 = best.  ``floor_average`` gives tied entries the integer part
    of their average position; ``min`` is competition ranking."""
    v = -np.asarray(values, float) if descending else np.asarray(values, float)
    if method == "floor_average":
        return np.floor(rankdata(v, method="average"))
    if method in TIE_METHODS:
        return rankdata(v, method=method).astype(float)
    raise ValueError(f"unknown tie method {method!r}")


def rank_summary(rows: list[MetricRow], it_ascending: bool = True, tie_method: str = "floor_average",
                 fields=RANK_FIELDS) -> list[RankRow]:
    """Rank each metric column across models; AvgRank is the mean rank rounded to 2 decimals."""
    ids = [(r.model, r.mfcc) for r in rows]
    if len({m for m, _ in ids}) != len(ids):
        raise ValueError("rank_summary expects one selected row per model")
    cols = []
    for f in fields:
        vals = [getattr(r, f) for r in rows]
        if any(v is None for v in vals):
            raise ValueError(f"column {f} has missing values")
        descending = not (f == "it_ms" and it_ascending)
        cols.append(rank_column(vals, descending, tie_method))
    R = np.column_stack(cols)
    return [RankRow(r.model, r.mfcc, tuple(R[i]), round(float(R[i].mean()) + 1e-12, 2))
            for i, r in enumerate(rows)]


def select_best_rows(rows: list[MetricRow], explicit: dict | None = None) -> list[MetricRow]:
    """One row per model: the listed MFCC size from ``explicit`` if given,
    otherwise the highest accuracy (first listed on ties).  Model order follows
    first appearance."""
    order, by_model = [], {}
    for r in rows:
        if r.model not in by_model:
            order.append(r.model)
        by_model.setdefault(r.model, []).append(r)
    chosen = []
    for m in order:
        cands = by_model[m]
        if explicit and m in explicit:
            match = [r for r in cands if r.mfcc == explicit[m]]
            if not match:
                raise ValueError(f"{m}: no row for MFCC {explicit[m]}")
            chosen.append(match[0])
        else:
            best = max(r.accuracy for r in cands)
            chosen.append(next(r for r in cands if r.accuracy == best))
    return chosen


# ------------------------------------------------------------ table formats

def format_rank_csv(rank_rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RANK_CSV_HEADER)
    for r in rank_rows:
        w.writerow(r.cells())
    return out.getvalue()


def parse_rank_csv(text: str) -> list[list[str]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MetricTableError("rank table is empty") from None
    if header != RANK_CSV_HEADER:
        raise MetricTableError(f"rank table header must be {','.join(RANK_CSV_HEADER)}")
    rows = [rec for rec in reader if rec]
    if not rows:
        raise MetricTableError("rank table has no rows")
    return rows


def format_text_table(headers, rows) -> str:
    rows = [[str(c) for c in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    body = ["  ".join(c.rjust(w) if i > 0 else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
            for r in rows]
    rule = "-" * len(line)
    return "\n".join([rule, line, rule, *body, rule]) + "\n"


def rank_text_table(rank_rows, title="") -> str:
    cells = [r.cells() for r in rank_rows]
    metric_heads = ["Acc", "Prec", "Rec", "F1", "AUC", "IT"][:len(cells[0]) - 3]
    text = format_text_table(["Model", "MFCC", *metric_heads, "AvgRank"], cells)
    return (title + "\n" if title else "") + text


def metric_text_table(rows: list[MetricRow], title="") -> str:
    headers = ["Model", "MFCC", "Accuracy (%)", "Precision (%)", "Recall (%)", "F1 (%)",
               "AUC-ROC (%)", "IT (ms)"]
    body = [[r.model, r.mfcc] + [f"{getattr(r, f):.2f}" for f in RATE_FIELDS_TXT]
            + ["" if r.it_ms is None else f"{r.it_ms:.4f}"] for r in rows]
    return (title + "\n" if title else "") + format_text_table(headers, body)


RATE_FIELDS_TXT = ["accuracy", "precision", "recall", "f1", "auc_roc"]


# ----------------------------------------------------------------- fixtures

@dataclass
class Mismatch:
    table: str
    row: int
    model: str
    column: str
    expected: str
    got: str

    def __str__(self):
        return (f"{self.table}: row {self.row} ({self.model}) column {self.column}: "
                f"expected {self.expected}, got {self.got}")


def _fixture_root(root=None):
    if root is not None:
        return Path(root)
    return Path(str(resources.files("lobster_acoustics") / "fixtures"))


def load_fixture_index(root=None) -> dict:
    idx = json.loads((_fixture_root(root) / "index.json").read_text())
    if idx.get("version") != 1:
        raise MetricTableError(f"unsupported fixture version {idx.get('version')}")
    return idx


def reproduce_rank_table(metrics_text: str, ranking_text: str, name: str = "",
                         tie_method: str = "floor_average"):
    """Recompute a reference rank table from its metric table.

    The model/MFCC pair of each reference row selects the metric row; the
    computed table is compared cell by cell.  Returns ``(rank_rows, mismatches)``.
    """
    metric_rows = parse_metric_csv(metrics_text)
    expected = parse_rank_csv(ranking_text)
    selection = {}
    for rec in expected:
        try:
            selection[rec[0]] = int(rec[1])
        except ValueError:
            raise MetricTableError(f"{name}: bad MFCC value {rec[1]!r}") from None
    order = [rec[0] for rec in expected]
    chosen = select_best_rows(metric_rows, selection)
    chosen = sorted((r for r in chosen if r.model in selection), key=lambda r: order.index(r.model))
    if len(chosen) != len(expected):
        missing = set(order) - {r.model for r in chosen}
        raise MetricTableError(f"{name}: models missing from the metric table: {sorted(missing)}")
    ranked = rank_summary(chosen, tie_method=tie_method)
    mismatches = []
    for i, (rec, got) in enumerate(zip(expected, ranked), start=1):
        cells = got.cells()
        for col, e, g in zip(RANK_CSV_HEADER, rec, cells):
            if col == "avg_rank":
                same = abs(float(e) - float(g)) < 1e-9
            elif col in RANK_COLUMNS:
                same = float(e) == float(g)
            else:
                same = e.strip() == g
            if not same:
                mismatches.append(Mismatch(name, i, rec[0], col, e, g))
    return ranked, mismatches


def reproduce_all(root=None, tie_method: str = "floor_average"):
    """Rank tables for every shipped fixture pair: ``{name: (rank_rows, mismatches)}``."""
    base = _fixture_root(root)
    idx = load_fixture_index(root)
    out = {}
    for name, rank_file in idx["rankings"].items():
        metrics_text = (base / idx["metrics"][name]).read_text()
        out[name] = reproduce_rank_table(metrics_text, (base / rank_file).read_text(), name,
                                         tie_method)
    return out
