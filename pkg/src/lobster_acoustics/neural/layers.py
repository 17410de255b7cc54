"""Forward/backward kernels on channel-last tensors of shape (batch, length, channels)."""

from __future__ import annotations

import numpy as np


def _as_blc(x):
    """Promote (L,) or (L, C) input to (1, L, C); report how to undo it."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :, None], 1
    if x.ndim == 2:
        return x[None], 2
    if x.ndim == 3:
        return x, 3
    raise ValueError(f"expected a 1-D, 2-D or 3-D tensor, got shape {x.shape}")


def _restore(y, ndim):
    if ndim == 1:
        return y[0, :, 0] if y.shape[2] == 1 else y[0]
    if ndim == 2:
        return y[0]
    return y


def conv_output_length(length: int, kernel_size: int, dilation: int = 1) -> int:
    out = length - (kernel_size - 1) * dilation
    if out < 1:
        raise ValueError(f"receptive field {(kernel_size - 1) * dilation + 1} exceeds "
                         f"input length {length}")
    return out


def _im2col(x, k, dilation, L_out):
    # (B, L_out, k*C): tap j occupies columns [j*C, (j+1)*C)
    return np.concatenate([x[:, j * dilation:j * dilation + L_out, :] for j in range(k)], axis=2)


def conv1d_forward(x, W, b=None, dilation: int = 1):
    """Valid (unpadded) dilated cross-correlation.

    ``x``: (B, L, C) (or (L,) / (L, C)); ``W``: (k, C, F) (or (k,) for one
    channel in and out); ``b``: (F,).  Output length ``L - (k-1)*dilation``.
    """
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    x3, ndim = _as_blc(x)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None, None]
    k, C, F = W.shape
    if x3.shape[2] != C:
        raise ValueError(f"kernel expects {C} input channels, input has {x3.shape[2]}")
    L_out = conv_output_length(x3.shape[1], k, dilation)
    out = _im2col(x3, k, dilation, L_out) @ W.reshape(k * C, F)
    if b is not None:
        out = out + np.asarray(b, dtype=np.float64)
    return _restore(out, ndim)


def conv1d_backward(dout, x, W, dilation: int = 1):
    """Gradients ``(dx, dW, db)`` of a conv layer given upstream ``dout`` (B, L_out, F)."""
    B, L, C = x.shape
    k, _, F = W.shape
    L_out = dout.shape[1]
    cols = _im2col(x, k, dilation, L_out)
    dW = (cols.reshape(-1, k * C).T @ dout.reshape(-1, F)).reshape(k, C, F)
    db = dout.sum(axis=(0, 1))
    dcols = dout @ W.reshape(k * C, F).T
    dx = np.zeros_like(x)
    for j in range(k):
        dx[:, j * dilation:j * dilation + L_out, :] += dcols[:, :, j * C:(j + 1) * C]
    return dx, dW, db


def maxpool1d(x, pool_size: int, return_indices: bool = False):
    """Non-overlapping max-pool; a trailing remainder shorter than the window is dropped.

    With ``return_indices`` the within-window argmax (first maximum on ties)
    is returned for the backward pass.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    x3, ndim = _as_blc(x)
    B, L, C = x3.shape
    Lp = L // pool_size
    if Lp < 1:
        raise ValueError(f"pool size {pool_size} exceeds input length {L}")
    win = x3[:, :Lp * pool_size].reshape(B, Lp, pool_size, C)
    idx = np.argmax(win, axis=2)
    out = np.take_along_axis(win, idx[:, :, None, :], axis=2)[:, :, 0, :]
    out = _restore(out, ndim)
    return (out, idx) if return_indices else out


def maxpool1d_backward(dout, idx, input_length: int, pool_size: int):
    B, Lp, C = dout.shape
    win = np.zeros((B, Lp, pool_size, C))
    np.put_along_axis(win, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    dx = np.zeros((B, input_length, C))
    dx[:, :Lp * pool_size] = win.reshape(B, Lp * pool_size, C)
    return dx


def relu(z):
    return np.maximum(z, 0.0)


def dense_forward(x, W, b):
    return x @ W + b


def dense_backward(dout, x, W):
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)
