"""One-hidden-layer perceptron with a sigmoid output, trained with Adam."""

from __future__ import annotations

import numpy as np

from ..optim import EarlyStopping, make_optimizer
from .base import BinaryClassifier, TrainingError, log1pexp, sigmoid
from .logreg import _stratified_folds

_ACT = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
}


def mlp_forward(params, X, activation):
    W1, b1, W2, b2 = params
    z1 = X @ W1 + b1
    a1 = _ACT[activation][0](z1)
    z2 = (a1 @ W2 + b2)[:, 0]
    return z1, a1, z2


def mlp_loss_grad(params, X, y, alpha, activation):
    """Mean binary cross-entropy plus ``alpha / (2 n) * sum(W**2)``.

    The penalty is divided by the batch size ``n`` so that ``alpha`` has the
    same meaning as in the common scikit-learn convention.  Biases are not
    penalised.  Returns ``(loss, [dW1, db1, dW2, db2])``.
    """
    W1, b1, W2, b2 = params
    n = len(y)
    z1, a1, z2 = mlp_forward(params, X, activation)
    loss = np.mean(log1pexp(z2) - y * z2) + 0.5 * alpha * (np.sum(W1 * W1) + np.sum(W2 * W2)) / n
    dz2 = ((sigmoid(z2) - y) / n)[:, None]
    dW2 = a1.T @ dz2 + alpha * W2 / n
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ W2.T) * _ACT[activation][1](z1, a1)
    dW1 = X.T @ dz1 + alpha * W1 / n
    db1 = dz1.sum(axis=0)
    return float(loss), [dW1, db1, dW2, db2]


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape if shape is not None else (fan_in, fan_out))


class MLPClassifier(BinaryClassifier):
    family = "mlp"
    display_name = "MLP"

    def __init__(self, hidden_units: int = 100, activation: str = "relu", alpha: float = 1e-4,
                 lr_policy: str = "constant", solver: str = "adam", learning_rate: float = 1e-3,
                 batch_size: int | None = None, max_epochs: int = 200, early_stopping: bool = True,
                 patience: int = 5, val_fraction: float = 0.1, tol: float = 1e-4, seed: int = 0):
        if hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if activation not in _ACT:
            raise ValueError(f"activation must be one of {sorted(_ACT)}")
        if lr_policy != "constant":
            raise ValueError("only the constant learning-rate policy is provided")
        if solver != "adam":
            raise ValueError("only the adam solver is provided")
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.hidden_units, self.activation, self.alpha = int(hidden_units), activation, alpha
        self.lr_policy, self.solver, self.learning_rate = lr_policy, solver, learning_rate
        self.batch_size, self.max_epochs = batch_size, max_epochs
        self.early_stopping, self.patience, self.val_fraction = early_stopping, patience, val_fraction
        self.tol, self.seed = tol, seed

    def init_params(self, d, rng):
        h = self.hidden_units
        return [glorot_uniform(rng, d, h), np.zeros(h), glorot_uniform(rng, h, 1), np.zeros(1)]

    def _fit(self, X, y):
        rng = np.random.default_rng(self.seed)
        yf = y.astype(np.float64)
        tr = np.arange(len(y))
        val = np.array([], dtype=np.int64)
        k = int(round(1.0 / self.val_fraction)) if self.val_fraction > 0 else 0
        use_val = self.early_stopping and k >= 2 and np.bincount(y, minlength=2).min() >= k
        if use_val:
            fold = _stratified_folds(y, k, self.seed)
            tr, val = np.flatnonzero(fold != 0), np.flatnonzero(fold == 0)
        params = self.init_params(X.shape[1], rng)
        opt = make_optimizer("adam", params, self.learning_rate)
        stopper = EarlyStopping(self.patience, self.tol)
        bs = min(200, len(tr)) if self.batch_size is None else min(self.batch_size, len(tr))
        curve = []
        for epoch in range(self.max_epochs):
            perm = tr[rng.permutation(len(tr))]
            total = 0.0
            for s in range(0, len(perm), bs):
                b = perm[s:s + bs]
                loss, grads = mlp_loss_grad(params, X[b], yf[b], self.alpha, self.activation)
                if not np.isfinite(loss):
                    raise TrainingError(f"MLP loss became non-finite at epoch {epoch}")
                opt.step(grads)
                total += loss * len(b)
            train_loss = total / len(perm)
            if use_val:
                z2 = mlp_forward(params, X[val], self.activation)[2]
                monitor = float(np.mean(log1pexp(z2) - yf[val] * z2))
            else:
                monitor = train_loss
            curve.append((train_loss, monitor))
            if stopper.update(epoch, monitor, params):
                break
        if stopper.snapshot is not None:
            params = stopper.snapshot
        W1, b1, W2, b2 = params
        return {"W1": W1, "b1": b1, "W2": W2, "b2": b2, "curve": np.array(curve),
                "best_epoch": stopper.best_epoch}

    def _params(self):
        s = self.state_
        return [s["W1"], s["b1"], s["W2"], s["b2"]]

    def _proba1(self, X):
        return sigmoid(mlp_forward(self._params(), X, self.activation)[2])

    def inference_cost(self):
        return float(self.n_features_ * self.hidden_units + self.hidden_units)
