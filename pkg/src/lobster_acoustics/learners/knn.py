"""k-nearest-neighbours with brute-force Minkowski search."""

from __future__ import annotations

import numpy as np

from .base import BinaryClassifier

_CHUNK = 256


def minkowski_distances(A: np.ndarray, B: np.ndarray, p: float) -> np.ndarray:
    """Pairwise Minkowski-p distances, shape (len(A), len(B)).

    Accumulates one feature at a time so no (len(A), len(B), d) temporary is
    ever built.
    """
    A = np.asarray(A, dtype=np.float64)
    Bt = np.ascontiguousarray(np.asarray(B, dtype=np.float64).T)
    out = np.empty((len(A), Bt.shape[1]))
    for s in range(0, len(A), _CHUNK):
        a = A[s:s + _CHUNK]
        acc = np.zeros((len(a), Bt.shape[1]))
        diff = np.empty_like(acc)
        for j in range(Bt.shape[0]):
            np.subtract(a[:, j, None], Bt[j], out=diff)
            np.abs(diff, out=diff)
            if p == 1:
                acc += diff
            elif p == 2:
                np.multiply(diff, diff, out=diff)
                acc += diff
            elif np.isinf(p):
                np.maximum(acc, diff, out=acc)
            else:
                acc += diff ** p
        if p == 2:
            acc = np.sqrt(acc)
        elif not (p == 1 or np.isinf(p)):
            acc = acc ** (1.0 / p)
        out[s:s + _CHUNK] = acc
    return out


def k_smallest(D: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the k smallest entries per row, ordered by
    (distance, index); identical to ``argsort(D, kind="stable")[:, :k]``."""
    n = D.shape[1]
    if k >= n:
        return np.argsort(D, axis=1, kind="stable")[:, :k]
    idx = np.argpartition(D, k - 1, axis=1)[:, :k]
    kth = np.take_along_axis(D, idx, axis=1).max(axis=1, keepdims=True)
    # rows with extra entries tied at the k-th distance need the full stable order
    tied = (D <= kth).sum(axis=1) > k
    d = np.take_along_axis(D, idx, axis=1)
    order = np.lexsort((idx, d), axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    if tied.any():
        idx[tied] = np.argsort(D[tied], axis=1, kind="stable")[:, :k]
    return idx


class KNNClassifier(BinaryClassifier):
    family = "knn"
    display_name = "KNN"

    def __init__(self, k: int = 5, p: float = 2, weight: str = "uniform", algorithm: str = "auto"):
        if k < 1:
            raise ValueError("k must be at least 1")
        if p < 1:
            raise ValueError("Minkowski p must be >= 1")
        if weight not in ("uniform", "distance"):
            raise ValueError(f"weight must be 'uniform' or 'distance', got {weight!r}")
        if algorithm not in ("auto", "brute"):
            raise ValueError("only exact brute-force search is provided ('auto' or 'brute')")
        self.k, self.p, self.weight, self.algorithm = int(k), p, weight, algorithm

    def _fit(self, X, y):
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds the {len(X)} training rows")
        return {"X": X.copy(), "y": y.copy()}

    def neighbors(self, X):
        """Indices and distances of the k nearest training rows per query.

        Equal distances are resolved by training-row index (stable sort).
        """
        self._check_fitted()
        D = minkowski_distances(np.asarray(X, float), self.state_["X"], self.p)
        idx = k_smallest(D, self.k)
        return idx, np.take_along_axis(D, idx, axis=1)

    def _proba1(self, X):
        idx, dist = self.neighbors(X)
        labels = self.state_["y"][idx]
        if self.weight == "uniform":
            return labels.mean(axis=1)
        exact = dist == 0
        w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float),
                     1.0 / np.where(dist == 0, 1.0, dist))
        return (w * labels).sum(axis=1) / w.sum(axis=1)

    def inference_cost(self):
        self._check_fitted()
        return float(self.state_["X"].size)
