"""Paired model comparisons: McNemar, bootstrap AUC difference, BH correction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import roc_auc

EXACT_BELOW = 25


@dataclass
class StatTestResult:
    test: str
    statistic: float
    p_value: float
    ci: tuple | None = None
    adjusted_p: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"test": self.test, "statistic": self.statistic, "p_value": self.p_value,
                "ci": list(self.ci) if self.ci is not None else None,
                "adjusted_p": self.adjusted_p, "details": self.details}


def binom_cdf_half(k: int, n: int) -> float:
    """P(X <= k) for X ~ Binomial(n, 1/2), exact rational arithmetic."""
    return sum(math.comb(n, i) for i in range(k + 1)) / 2 ** n


def mcnemar(pred_a, pred_b, y_true, exact_below: int = EXACT_BELOW) -> StatTestResult:
    """McNemar test on discordant pairs.

    b counts rows A got right and B got wrong, c the reverse.  Below
    ``exact_below`` discordant pairs the two-sided exact binomial p is used,
    otherwise the continuity-corrected chi-square.  The reported statistic
    is always ``max(|b - c| - 1, 0)^2 / (b + c)``.
    """
    a, bb, t = (np.asarray(v) for v in (pred_a, pred_b, y_true))
    if not a.shape == bb.shape == t.shape:
        raise ValueError("predictions and labels must be aligned")
    ra, rb = a == t, bb == t
    b = int(np.sum(ra & ~rb))
    c = int(np.sum(~ra & rb))
    n = b + c
    if n == 0:
        return StatTestResult("mcnemar", 0.0, 1.0,
                              details={"b": 0, "c": 0, "method": "none", "zero_discordance": True})
    stat = max(abs(b - c) - 1, 0) ** 2 / n
    if n < exact_below:
        p = min(1.0, 2.0 * binom_cdf_half(min(b, c), n))
        method = "exact"
    else:
        p = math.erfc(math.sqrt(stat / 2.0))  # chi-square, 1 dof
        method = "chi2_cc"
    return StatTestResult("mcnemar", float(stat), float(p),
                          details={"b": b, "c": c, "method": method, "zero_discordance": False})


def benjamini_hochberg(p_values) -> np.ndarray:
    """Step-up adjusted p-values, returned in the input order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return p.copy()
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    out = np.empty(m)
    out[order] = adj_sorted
    return out


def bootstrap_auc_diff(scores_a, scores_b, y_true, n_boot: int = 2000, seed: int = 0,
                       level: float = 0.95, positive=1) -> StatTestResult:
    """Paired bootstrap of AUC(a) - AUC(b) in percentage points.

    Resamples containing a single class are redrawn (and counted).  The CI is
    the percentile interval, widened if needed so that it contains the point
    estimate; p is twice the smaller fraction of resampled differences on
    either side of zero, capped at 1.
    """
    if n_boot < 100:
        raise ValueError("n_boot must be >= 100")
    sa, sb = np.asarray(scores_a, float), np.asarray(scores_b, float)
    t = (np.asarray(y_true) == positive).astype(np.int64)
    n = len(t)
    point = roc_auc(t, sa) - roc_auc(t, sb)
    rng = np.random.default_rng(seed)
    diffs = np.empty(n_boot)
    redrawn = 0
    for i in range(n_boot):
        while True:
            idx = rng.integers(0, n, n)
            tt = t[idx]
            if 0 < tt.sum() < n:
                break
            redrawn += 1
        diffs[i] = roc_auc(tt, sa[idx]) - roc_auc(tt, sb[idx])
    tail = (1.0 - level) / 2.0
    lo, hi = np.percentile(diffs, [100 * tail, 100 * (1 - tail)])
    lo, hi = min(lo, point), max(hi, point)
    p = min(1.0, 2.0 * min(np.mean(diffs <= 0), np.mean(diffs >= 0)))
    return StatTestResult("bootstrap_auc_diff", float(point), float(p), (float(lo), float(hi)),
                          details={"n_boot": n_boot, "redrawn": redrawn, "seed": seed,
                                   "level": level})


def apply_bh(results: list[StatTestResult]) -> list[StatTestResult]:
    adj = benjamini_hochberg([r.p_value for r in results])
    for r, a in zip(results, adj):
        r.adjusted_p = float(max(a, r.p_value))
    return results
