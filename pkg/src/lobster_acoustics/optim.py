"""First-order optimizers operating in place on lists of numpy arrays."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class RMSprop:
    def __init__(self, params, lr=1e-3, rho=0.9, eps=1e-7):
        self.params = params
        self.lr, self.rho, self.eps = lr, rho, eps
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        for p, g, v in zip(self.params, grads, self.v):
            v *= self.rho
            v += (1 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(v) + self.eps)


def make_optimizer(name: str, params, lr: float = 1e-3):
    if name == "adam":
        return Adam(params, lr)
    if name == "rmsprop":
        return RMSprop(params, lr)
    raise ValueError(f"unknown optimizer {name!r} (expected 'adam' or 'rmsprop')")


class EarlyStopping:
    """Track validation loss; remember the best snapshot and signal when
    ``patience`` epochs pass without improvement of at least ``min_delta``."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience, self.min_delta = patience, min_delta
        self.best = np.inf
        self.best_epoch = -1
        self.snapshot = None
        self.wait = 0

    def update(self, epoch, loss, params) -> bool:
        if loss < self.best - self.min_delta:
            self.best, self.best_epoch, self.wait = loss, epoch, 0
            self.snapshot = [p.copy() for p in params]
            return False
        self.wait += 1
        return self.wait >= self.patience
