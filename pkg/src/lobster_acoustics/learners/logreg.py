"""L2-regularised logistic regression (the stacking meta-learner)."""

from __future__ import annotations

import numpy as np

from .base import BinaryClassifier, ConvergenceError, log1pexp, sigmoid

DEFAULT_L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)


def logreg_objective(w, b, X, y, l2):
    """Mean cross-entropy + l2/2 * ||w||^2 (intercept unpenalised).

    Returns ``(loss, grad_w, grad_b)``.
    """
    z = X @ w + b
    loss = np.mean(log1pexp(z) - y * z) + 0.5 * l2 * (w @ w)
    r = (sigmoid(z) - y) / len(y)
    return loss, X.T @ r + l2 * w, r.sum()


def _newton(X, y, l2, tol, max_iter):
    n, d = X.shape
    Xa = np.column_stack([X, np.ones(n)])
    theta = np.zeros(d + 1)
    prior = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    theta[-1] = np.log(prior / (1 - prior))
    reg = np.full(d + 1, l2)
    reg[-1] = 0.0

    def obj(t):
        return logreg_objective(t[:-1], t[-1], X, y, l2)

    f, gw, gb = obj(theta)
    g = np.append(gw, gb)
    for it in range(max_iter):
        if np.max(np.abs(g)) < tol:
            return theta, it
        p = sigmoid(Xa @ theta)
        H = (Xa * (p * (1 - p) / n)[:, None]).T @ Xa + np.diag(reg)
        step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            fc, gwc, gbc = obj(cand)
            if fc <= f - 1e-4 * t * (g @ step) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10 and fc > f:
            break
        theta, f, g = cand, fc, np.append(gwc, gbc)
    if np.max(np.abs(g)) < tol:
        return theta, max_iter
    raise ConvergenceError(f"logistic regression gradient norm {np.max(np.abs(g)):.3g} "
                           f"above {tol:g} after {max_iter} iterations", state=theta)


def _stratified_folds(y, k, seed):
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        fold[idx] = np.arange(len(idx)) % k
    return fold


class LogisticRegression(BinaryClassifier):
    family = "logreg"
    display_name = "LogReg"

    def __init__(self, l2_strength: float | None = None, l2_grid=DEFAULT_L2_GRID,
                 cv_folds: int = 5, tol: float = 1e-8, max_iter: int = 100, seed: int = 0):
        if l2_strength is not None and l2_strength < 0:
            raise ValueError("l2_strength must be non-negative")
        self.l2_strength = l2_strength
        self.l2_grid = tuple(float(v) for v in l2_grid)
        self.cv_folds = cv_folds
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed

    def select_l2(self, X, y):
        """Inner stratified CV on held-out log-loss; ties favour the stronger penalty."""
        k = min(self.cv_folds, int(np.bincount(y, minlength=2).min()))
        if k < 2:
            return max(self.l2_grid), {}
        fold = _stratified_folds(y, k, self.seed)
        scores = {}
        for l2 in self.l2_grid:
            losses = []
            for f in range(k):
                tr, te = fold != f, fold == f
                if len(np.unique(y[tr])) < 2:
                    continue
                theta, _ = _newton(X[tr], y[tr].astype(float), l2, self.tol, self.max_iter)
                z = X[te] @ theta[:-1] + theta[-1]
                losses.append(np.sum(log1pexp(z) - y[te] * z))
            scores[l2] = float(np.sum(losses) / len(y))
        best = min(scores, key=lambda l2: (round(scores[l2], 12), -l2))
        return best, scores

    def _fit(self, X, y):
        l2 = self.l2_strength
        cv_scores = {}
        if l2 is None:
            l2, cv_scores = self.select_l2(X, y)
        theta, n_iter = _newton(X, y.astype(float), l2, self.tol, self.max_iter)
        return {"coef": theta[:-1].copy(), "intercept": float(theta[-1]), "l2": float(l2),
                "n_iter": int(n_iter),
                "cv_log_loss": {repr(k): v for k, v in cv_scores.items()}}

    def _proba1(self, X):
        return sigmoid(X @ self.state_["coef"] + self.state_["intercept"])

    def gradient_norm(self, X, y) -> float:
        s = self.state_
        _, gw, gb = logreg_objective(s["coef"], s["intercept"], np.asarray(X, float),
                                     np.asarray(y, float), s["l2"])
        return float(max(np.max(np.abs(gw)), abs(gb)))

    def inference_cost(self):
        return float(self.n_features_)
