"""Discrimination metrics, AUC, calibration and the metric-row CSV format."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

METRIC_COLUMNS = ["model", "mfcc", "accuracy", "precision", "recall", "f1", "auc_roc", "it_ms"]
RATE_FIELDS = ["accuracy", "precision", "recall", "f1", "auc_roc"]


@dataclass
class Rates:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: np.ndarray  # [[TN, FP], [FN, TP]]
    flags: tuple = ()


def _binary(y, positive):
    y = np.asarray(y)
    return (y == positive).astype(np.int64)


def confusion_and_rates(y_true, y_pred, positive=1) -> Rates:
    """Percent rates from the 2x2 confusion matrix.

    A rate whose denominator is zero is reported as 0 and named in ``flags``.
    """
    if len(y_true) == 0:
        raise ValueError("empty input")
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred lengths differ")
    t, p = _binary(y_true, positive), _binary(y_pred, positive)
    tp = int(np.sum((t == 1) & (p == 1)))
    tn = int(np.sum((t == 0) & (p == 0)))
    fp = int(np.sum((t == 0) & (p == 1)))
    fn = int(np.sum((t == 1) & (p == 0)))
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(f"{name}_undefined")
            return 0.0
        return 100.0 * num / den

    acc = 100.0 * (tp + tn) / len(t)
    prec = ratio(tp, tp + fp, "precision")
    rec = ratio(tp, tp + fn, "recall")
    if prec + rec == 0:
        flags.append("f1_undefined")
        f1 = 0.0
    else:
        f1 = 2 * prec * rec / (prec + rec)
    return Rates(acc, prec, rec, f1, np.array([[tn, fp], [fn, tp]]), tuple(flags))


def roc_auc(y_true, scores, positive=1) -> float:
    """Mann-Whitney AUC in percent; tied scores count one half."""
    t = _binary(y_true, positive)
    s = np.asarray(scores, dtype=np.float64)
    n1 = int(t.sum())
    n0 = len(t) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes in y_true")
    ranks = rankdata(s, method="average")
    u = ranks[t == 1].sum() - n1 * (n1 + 1) / 2.0
    return 100.0 * u / (n1 * n0)


@dataclass
class MetricRow:
    model: str
    mfcc: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc_roc: float
    it_ms: float | None = None
    confusion: np.ndarray | None = None
    flags: tuple = ()
    extra: dict = field(default_factory=dict)

    def check(self):
        for name in RATE_FIELDS:
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{self.model}: {name}={v} outside [0, 100]")
        if self.precision + self.recall > 0:
            hm = 2 * self.precision * self.recall / (self.precision + self.recall)
            if abs(hm - self.f1) > 0.01:
                raise ValueError(f"{self.model}: F1 inconsistent with precision/recall")
        return self

    def values(self, include_it=True):
        vals = [getattr(self, f) for f in RATE_FIELDS]
        return vals + [self.it_ms] if include_it else vals


def evaluate_predictions(model_id, mfcc, y_true, y_pred, scores, positive=1, it_ms=None) -> MetricRow:
    r = confusion_and_rates(y_true, y_pred, positive)
    auc = roc_auc(y_true, scores, positive)
    return MetricRow(model_id, int(mfcc), r.accuracy, r.precision, r.recall, r.f1, auc, it_ms,
                     r.confusion, r.flags).check()


# ------------------------------------------------------------------ CSV I/O

def _fmt(v, digits):
    return "" if v is None else f"{v:.{digits}f}"


def format_metric_csv(rows, digits: int = 4) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([r.model, r.mfcc] + [_fmt(getattr(r, f), digits) for f in RATE_FIELDS]
                   + [_fmt(r.it_ms, digits)])
    return out.getvalue()


class MetricTableError(ValueError):
    pass


def parse_metric_csv(text: str) -> list[MetricRow]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MetricTableError("metric table is empty") from None
    if [h.strip() for h in header] != METRIC_COLUMNS:
        raise MetricTableError(f"metric table header must be {','.join(METRIC_COLUMNS)}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(METRIC_COLUMNS):
            raise MetricTableError(f"line {lineno}: expected {len(METRIC_COLUMNS)} fields")
        try:
            vals = [float(v) for v in rec[2:7]]
            it = float(rec[7]) if rec[7].strip() else None
            rows.append(MetricRow(rec[0].strip(), int(rec[1]), *vals, it_ms=it))
        except ValueError as exc:
            raise MetricTableError(f"line {lineno}: {exc}") from None
    if not rows:
        raise MetricTableError("metric table has no rows")
    return rows


def read_metric_csv(path) -> list[MetricRow]:
    return parse_metric_csv(Path(path).read_text())


# -------------------------------------------------------------- calibration

@dataclass
class CalibrationReport:
    bins: list  # (lo, hi, mean_predicted | None, empirical_rate | None, count)
    brier: float

    def to_dict(self):
        return {"brier": self.brier,
                "bins": [dict(zip(("lo", "hi", "mean_predicted", "empirical_rate", "count"), b))
                         for b in self.bins]}


def calibration_report(probabilities, y_true, n_bins: int = 10, positive=1) -> CalibrationReport:
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    p = np.asarray(probabilities, dtype=np.float64)
    t = _binary(y_true, positive)
    if len(p) != len(t) or len(p) == 0:
        raise ValueError("probabilities and labels must be non-empty and aligned")
    idx = np.minimum((p * n_bins).astype(np.int64), n_bins - 1)
    bins = []
    for b in range(n_bins):
        m = idx == b
        c = int(m.sum())
        if c:
            bins.append((b / n_bins, (b + 1) / n_bins, float(p[m].mean()), float(t[m].mean()), c))
        else:
            bins.append((b / n_bins, (b + 1) / n_bins, None, None, 0))
    return CalibrationReport(bins, float(np.mean((p - t) ** 2)))
