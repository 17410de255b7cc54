"""RBF support-vector machine: SMO dual solver with second-order working-set
selection, plus Platt-scaled probabilities."""

from __future__ import annotations

import numpy as np

from .base import BinaryClassifier, ConvergenceError, log1pexp, sigmoid
from .logreg import _stratified_folds

_TAU = 1e-12


def rbf_kernel(A, B, gamma):
    aa = np.einsum("ij,ij->i", A, A)[:, None]
    bb = np.einsum("ij,ij->i", B, B)[None, :]
    sq = np.maximum(aa + bb - 2.0 * A @ B.T, 0.0)
    return np.exp(-gamma * sq)


def resolve_gamma(gamma, X) -> float:
    d = X.shape[1]
    if gamma == "auto":
        return 1.0 / d
    if gamma == "scale":
        v = X.var()
        return 1.0 / (d * v) if v > 0 else 1.0
    g = float(gamma)
    if g <= 0:
        raise ValueError("gamma must be positive")
    return g


def smo_solve(K, y, C, tol=1e-3, max_iter=None):
    """Solve the C-SVM dual for a precomputed kernel ``K`` and labels in {-1,+1}.

    Returns ``(alpha, b, n_iter)``.  Stops when the maximal violating pair
    gap drops below ``tol``; raises :class:`ConvergenceError` (carrying the
    current iterate) if ``max_iter`` is reached first.
    """
    n = len(y)
    y = y.astype(np.float64)
    if max_iter is None:
        max_iter = max(100_000, 100 * n)
    Q = K * np.outer(y, y)
    QD = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while True:
        up = ((alpha < C) & (y > 0)) | ((alpha > 0) & (y < 0))
        low = ((alpha < C) & (y < 0)) | ((alpha > 0) & (y > 0))
        yg = -y * G
        cand_up = np.where(up, yg, -np.inf)
        i = int(np.argmax(cand_up))
        m = cand_up[i]
        M = np.min(np.where(low, yg, np.inf))
        if m - M < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(f"SMO did not reach gap {tol:g} in {max_iter} iterations "
                                   f"(gap {m - M:.3g})", state={"alpha": alpha, "gap": m - M})
        # second-order choice of j among the violating members of I_low
        grad_diff = m - yg
        quad = QD[i] + QD - 2.0 * K[i]
        quad = np.where(quad > 0, quad, _TAU)
        score = np.where(low & (grad_diff > 0), -(grad_diff ** 2) / quad, np.inf)
        j = int(np.argmin(score))

        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            q = QD[i] + QD[j] + 2.0 * Q[i, j]
            q = q if q > 0 else _TAU
            delta = (-G[i] - G[j]) / q
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            q = QD[i] + QD[j] - 2.0 * Q[i, j]
            q = q if q > 0 else _TAU
            delta = (G[i] - G[j]) / q
            total = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        G += Q[:, i] * (alpha[i] - ai) + Q[:, j] * (alpha[j] - aj)
        it += 1

    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yG[free].mean()
    else:
        at_ub = alpha >= C
        at_lb = alpha <= 0
        lb_mask = (at_ub & (y > 0)) | (at_lb & (y < 0))
        ub_mask = (at_ub & (y < 0)) | (at_lb & (y > 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = (ub + lb) / 2 if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return alpha, -float(rho), it


def kkt_violations(alpha, margins, C):
    """Per-sample KKT violation given ``margins = y * f(x)`` on the training set."""
    v = np.zeros(len(alpha))
    zero = alpha <= 0
    full = alpha >= C
    free = ~zero & ~full
    v[zero] = np.maximum(0.0, 1.0 - margins[zero])
    v[free] = np.abs(margins[free] - 1.0)
    v[full] = np.maximum(0.0, margins[full] - 1.0)
    return v


def platt_fit(f, y, max_iter=100):
    """Sigmoid P(y=1|f) = 1 / (1 + exp(A f + B)) with smoothed targets."""
    f = np.asarray(f, float)
    y = np.asarray(y)
    n_pos, n_neg = int((y == 1).sum()), int((y == 0).sum())
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))

    def obj(A, B):
        z = A * f + B
        # -[t log p + (1-t) log(1-p)] with p = sigmoid(-z)
        return np.sum(t * z + log1pexp(-z))

    fval = obj(A, B)
    for _ in range(max_iter):
        p = sigmoid(-(A * f + B))
        d1 = t - p
        d2 = p * (1 - p)
        g = np.array([np.sum(f * d1), np.sum(d1)])
        if np.max(np.abs(g)) < 1e-5:
            break
        H = np.array([[np.sum(f * f * d2) + 1e-12, np.sum(f * d2)],
                      [np.sum(f * d2), np.sum(d2) + 1e-12]])
        step = np.linalg.solve(H, g)
        s = 1.0
        while s >= 1e-10:
            nA, nB = A - s * step[0], B - s * step[1]
            nf = obj(nA, nB)
            if nf < fval + 1e-4 * s * (g @ (-step)):
                A, B, fval = nA, nB, nf
                break
            s /= 2
        else:
            break
    return float(A), float(B)


class SVMClassifier(BinaryClassifier):
    family = "svm"
    display_name = "SVM"

    def __init__(self, C: float = 1.0, gamma="scale", kernel: str = "rbf", tol: float = 1e-3,
                 max_iter: int | None = None, platt_folds: int = 5, seed: int = 0):
        if C <= 0:
            raise ValueError("C must be positive")
        if kernel != "rbf":
            raise ValueError("only the rbf kernel is provided")
        if isinstance(gamma, str) and gamma not in ("auto", "scale"):
            raise ValueError(f"gamma must be 'auto', 'scale' or a positive number, got {gamma!r}")
        self.C, self.gamma, self.kernel = float(C), gamma, kernel
        self.tol, self.max_iter = tol, max_iter
        self.platt_folds, self.seed = platt_folds, seed

    def _solve(self, X, y, gamma):
        K = rbf_kernel(X, X, gamma)
        ys = np.where(y == 1, 1.0, -1.0)
        alpha, b, n_iter = smo_solve(K, ys, self.C, self.tol, self.max_iter)
        return alpha, b, n_iter, K

    def _fit(self, X, y):
        if len(np.unique(y)) < 2:
            raise ValueError("SVM needs both classes in the training data")
        gamma = resolve_gamma(self.gamma, X)
        alpha, b, n_iter, K = self._solve(X, y, gamma)
        ys = np.where(y == 1, 1.0, -1.0)
        train_dec = K @ (alpha * ys) + b

        # Platt scaling on out-of-fold decision values
        k = min(self.platt_folds, int(np.bincount(y, minlength=2).min()))
        if k >= 2:
            fold = _stratified_folds(y, k, self.seed)
            oof = np.empty(len(y))
            for f in range(k):
                tr, te = fold != f, fold == f
                a_f, b_f, _, _ = self._solve(X[tr], y[tr], gamma)
                sv = a_f > 0
                coef = a_f[sv] * np.where(y[tr][sv] == 1, 1.0, -1.0)
                oof[te] = rbf_kernel(X[te], X[tr][sv], gamma) @ coef + b_f
            A, B = platt_fit(oof, y)
        else:
            A, B = platt_fit(train_dec, y)

        sv = alpha > 0
        return {"alpha": alpha, "support_vectors": X[sv].copy(), "dual_coef": alpha[sv] * ys[sv],
                "intercept": b, "gamma": gamma, "platt_A": A, "platt_B": B, "n_iter": n_iter}

    def decision_function(self, X):
        self._check_fitted()
        s = self.state_
        X = np.asarray(X, float)
        if len(s["dual_coef"]) == 0:
            return np.full(len(X), s["intercept"])
        return rbf_kernel(X, s["support_vectors"], s["gamma"]) @ s["dual_coef"] + s["intercept"]

    def _proba1(self, X):
        return sigmoid(-(self.state_["platt_A"] * self.decision_function(X) + self.state_["platt_B"]))

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def kkt_audit(self, X, y) -> np.ndarray:
        ys = np.where(np.asarray(y) == 1, 1.0, -1.0)
        return kkt_violations(self.state_["alpha"], ys * self.decision_function(X), self.C)

    def inference_cost(self):
        self._check_fitted()
        return float(self.state_["support_vectors"].size)
