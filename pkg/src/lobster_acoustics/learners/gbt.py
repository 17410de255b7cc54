"""Gradient-boosted trees for logistic loss (the "XGBoost" family)."""

from __future__ import annotations

import numpy as np

from .base import BinaryClassifier, log1pexp, sigmoid
from .trees import build_regression_tree, tree_depth, tree_predict


def log_loss_from_margin(F, y) -> float:
    return float(np.mean(log1pexp(F) - y * F))


class GradientBoostingClassifier(BinaryClassifier):
    """Stage-wise boosting on the raw margin ``F(x)``.

    With ``newton=True`` (default) leaf values are ``-G/(H + reg_lambda)``
    using the logistic hessian, as in XGBoost; ``newton=False`` fits plain
    negative-gradient trees (unit hessian, no leaf penalty).
    """

    family = "gbt"
    display_name = "XGBoost"

    def __init__(self, n_estimators: int = 100, learning_rate: float = 0.1, max_depth: int = 3,
                 subsample: float = 1.0, colsample_bytree: float = 1.0, reg_lambda: float = 1.0,
                 min_child_weight: float = 1.0, newton: bool = True, seed: int = 0):
        if not 0 < learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        for name, v in (("subsample", subsample), ("colsample_bytree", colsample_bytree)):
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        self.n_estimators, self.learning_rate, self.max_depth = n_estimators, learning_rate, max_depth
        self.subsample, self.colsample_bytree = subsample, colsample_bytree
        self.reg_lambda, self.min_child_weight = reg_lambda, min_child_weight
        self.newton, self.seed = newton, seed

    def _fit(self, X, y):
        n, d = X.shape
        prior = y.mean()
        if prior in (0.0, 1.0):
            raise ValueError("boosting needs both classes in the training data")
        base = float(np.log(prior / (1 - prior)))
        F = np.full(n, base)
        yf = y.astype(np.float64)
        n_rows = max(1, int(self.subsample * n))
        n_cols = max(1, int(self.colsample_bytree * d))
        lam = self.reg_lambda if self.newton else 0.0
        mcw = self.min_child_weight if self.newton else 0.0
        rng = np.random.default_rng(self.seed)
        trees, trace = [], [log_loss_from_margin(F, yf)]
        for _ in range(self.n_estimators):
            p = sigmoid(F)
            g = p - yf
            h = p * (1 - p) if self.newton else np.ones(n)
            rows = np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n else np.arange(n)
            cols = np.sort(rng.choice(d, n_cols, replace=False)) if n_cols < d else np.arange(d)
            tree = build_regression_tree(X[rows], g[rows], h[rows], self.max_depth, lam, mcw,
                                         features=cols)
            trees.append(tree)
            F = F + self.learning_rate * tree_predict(tree, X)
            trace.append(log_loss_from_margin(F, yf))
        return {"base_margin": base, "trees": trees, "loss_trace": np.array(trace)}

    def margin(self, X, n_trees: int | None = None):
        self._check_fitted()
        X = np.asarray(X, float)
        F = np.full(len(X), self.state_["base_margin"])
        for t in self.state_["trees"][:n_trees]:
            F = F + self.learning_rate * tree_predict(t, X)
        return F

    def _proba1(self, X):
        return sigmoid(self.margin(X))

    def inference_cost(self):
        return float(sum(tree_depth(t) + 1 for t in self.state_["trees"]))
