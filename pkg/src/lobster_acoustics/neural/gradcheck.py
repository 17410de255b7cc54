"""Central finite-difference gradient verification."""

from __future__ import annotations

import numpy as np


def numeric_gradient(loss_fn, params, h=1e-4, pattern_fn=None):
    """Central differences of ``loss_fn()`` w.r.t. every entry of ``params`` (mutated in place
    and restored).

    If ``pattern_fn`` is given it must return a hashable-comparable description
    of the piecewise-linear regime (ReLU masks, pooling winners).  Entries whose
    +h / -h evaluations fall in different regimes straddle a kink, where the
    derivative is undefined; they are returned as NaN.
    """
    grads = []
    for P in params:
        num = np.zeros_like(P)
        flat = P.reshape(-1)
        out = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            pp = pattern_fn() if pattern_fn else None
            flat[i] = orig - h
            lm = loss_fn()
            pm = pattern_fn() if pattern_fn else None
            flat[i] = orig
            if pattern_fn and not all(np.array_equal(a, b) for a, b in zip(pp, pm)):
                out[i] = np.nan
            else:
                out[i] = (lp - lm) / (2 * h)
        grads.append(num)
    return grads


def relative_errors(analytic, numeric):
    """Per-tensor ``||a - n|| / max(||a||, ||n||)`` over the entries where ``n`` is defined.

    Returns ``(errors, n_skipped)``.
    """
    errs, skipped = [], 0
    for a, n in zip(analytic, numeric):
        ok = ~np.isnan(n)
        skipped += int((~ok).sum())
        a, n = a[ok], n[ok]
        denom = max(np.linalg.norm(a), np.linalg.norm(n))
        errs.append(0.0 if denom < 1e-12 else float(np.linalg.norm(a - n) / denom))
    return errs, skipped


def cnn_activation_pattern(spec, params, X):
    """ReLU masks and max-pool winners for every block plus the dense layer."""
    from .cnn import _as_input
    from .layers import conv1d_forward, maxpool1d

    a = _as_input(X)
    pattern = []
    for i, b in enumerate(spec.layers):
        z = conv1d_forward(a, params[2 * i], params[2 * i + 1], b.dilation)
        r = np.maximum(z, 0.0)
        a, idx = maxpool1d(r, b.pool_size, return_indices=True)
        pattern += [z > 0, idx]
    Wd, bd = params[-4], params[-3]
    pattern.append(a.reshape(len(a), -1) @ Wd + bd > 0)
    return pattern


def check_cnn_gradients(spec, params, X, y, h=1e-4):
    from .cnn import cnn_loss_grad

    _, analytic = cnn_loss_grad(spec, params, X, y)
    numeric = numeric_gradient(lambda: cnn_loss_grad(spec, params, X, y)[0], params, h,
                               lambda: cnn_activation_pattern(spec, params, X))
    return relative_errors(analytic, numeric)
