"""Gaussian naive Bayes."""

from __future__ import annotations

import numpy as np

from .base import BinaryClassifier


class GaussianNB(BinaryClassifier):
    family = "nb"
    display_name = "NB"

    def __init__(self, var_smoothing: float = 1e-9):
        if var_smoothing < 0:
            raise ValueError("var_smoothing must be non-negative")
        self.var_smoothing = var_smoothing

    def _fit(self, X, y):
        counts = np.bincount(y, minlength=2)
        if counts.min() < 2:
            raise ValueError("each class needs at least two training rows")
        # floor relative to the widest feature, so constant columns stay finite
        floor = self.var_smoothing * X.var(axis=0).max()
        means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
        var = np.stack([X[y == c].var(axis=0) for c in (0, 1)]) + floor
        if np.any(var <= 0):
            var = np.maximum(var, np.finfo(float).tiny)
        return {"theta": means, "var": var, "log_prior": np.log(counts / counts.sum())}

    def joint_log_likelihood(self, X):
        s = self.state_
        ll = []
        for c in (0, 1):
            ll.append(s["log_prior"][c]
                      - 0.5 * np.sum(np.log(2 * np.pi * s["var"][c]))
                      - 0.5 * np.sum((X - s["theta"][c]) ** 2 / s["var"][c], axis=1))
        return np.column_stack(ll)

    def _proba1(self, X):
        jll = self.joint_log_likelihood(X)
        # log-sum-exp normalisation
        m = jll.max(axis=1, keepdims=True)
        post = np.exp(jll - m)
        return post[:, 1] / post.sum(axis=1)

    def inference_cost(self):
        return float(2 * self.n_features_)
