"""Exhaustive grid search with cross-validated accuracy."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .logreg import _stratified_folds
from .pipeline import make_pipeline


def expand_grid(grid: dict) -> list[dict]:
    """Cartesian product of a ``{param: [values]}`` mapping, in declaration order."""
    if not grid:
        return [{}]
    keys = list(grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in (grid[k] for k in keys)]
    if any(len(v) == 0 for v in values):
        raise ValueError("grid has a parameter with no candidate values")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


@dataclass
class GridResult:
    best_params: dict
    best_index: int
    table: list[dict] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def best_score(self) -> float:
        return self.table[self.best_index]["mean_accuracy"]


def _fold_assignment(y, folds, seed):
    if isinstance(folds, (int, np.integer)):
        k = int(folds)
        if k < 2:
            raise ValueError("need at least two folds")
        minority = int(np.bincount(y, minlength=2).min())
        if k > minority:
            raise ValueError(f"{k} folds exceed the minority class size ({minority})")
        return _stratified_folds(y, k, seed)
    fold = np.asarray(folds, dtype=np.int64)
    if fold.shape != y.shape:
        raise ValueError("fold assignment must have one entry per training row")
    return fold


def grid_search(family: str, grid: dict, X, y, folds=5, seed: int = 0,
                n_components="preset", log=None) -> GridResult:
    """Evaluate every grid candidate by K-fold CV accuracy.

    ``folds`` is either K (stratified, ungrouped) or a precomputed fold index
    per row (e.g. from a group-aware splitter).  The winner has the highest
    mean accuracy; ties go to the lower fitted inference-cost proxy and then
    to the earlier grid position.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    candidates = expand_grid(grid)
    fold = _fold_assignment(y, folds, seed)
    fold_ids = np.unique(fold)
    t0 = time.perf_counter()
    table = []
    for ci, params in enumerate(candidates):
        accs, costs = [], []
        for f in fold_ids:
            tr, te = fold != f, fold == f
            pipe = make_pipeline(family, params, n_components, seed).fit(X[tr], y[tr])
            accs.append(float(np.mean(pipe.predict(X[te]) == y[te])))
            costs.append(pipe.inference_cost())
        row = {"index": ci, "params": params, "fold_accuracy": accs,
               "mean_accuracy": float(np.mean(accs)), "std_accuracy": float(np.std(accs)),
               "inference_cost": float(np.mean(costs))}
        table.append(row)
        if log is not None:
            log("grid_cell", family=family, cell=ci, mean_acc=f"{row['mean_accuracy']:.6f}")
    best = min(table, key=lambda r: (-round(r["mean_accuracy"], 12), r["inference_cost"], r["index"]))
    return GridResult(dict(candidates[best["index"]]), best["index"], table,
                      time.perf_counter() - t0)
