"""1D-CNN / 1D-DCNN classifiers over MFCC vectors reshaped to (d, 1)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..learners.base import BinaryClassifier, TrainingError, log1pexp, sigmoid
from ..learners.logreg import _stratified_folds
from ..optim import EarlyStopping, make_optimizer
from .layers import (conv1d_backward, conv1d_forward, conv_output_length, dense_backward,
                     maxpool1d, maxpool1d_backward)

MAX_BLOCKS = 4


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel_size: int
    dilation: int = 1
    pool_size: int = 2
    activation: str = "relu"

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError("filters must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive (got {self.kernel_size})")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.activation != "relu":
            raise ValueError("conv blocks use ReLU")


@dataclass(frozen=True)
class CnnSpec:
    layers: tuple
    dense_units: int = 128
    optimizer: str = "adam"
    batch_size: int | None = 32
    epochs: int = 10
    learning_rate: float = 1e-3
    patience: int | None = 2
    val_fraction: float = 0.1
    name: str = ""

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, ConvBlock) else ConvBlock(**b) for b in self.layers)
        object.__setattr__(self, "layers", blocks)
        if not 1 <= len(blocks) <= MAX_BLOCKS:
            raise ValueError(f"a CNN has 1 to {MAX_BLOCKS} conv blocks (got {len(blocks)})")
        if self.dense_units < 1:
            raise ValueError("dense_units must be >= 1")
        if self.optimizer not in ("adam", "rmsprop"):
            raise ValueError("optimizer must be 'adam' or 'rmsprop'")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @property
    def dilated(self) -> bool:
        return any(b.dilation > 1 for b in self.layers)

    def shapes(self, input_length: int) -> list[tuple[int, int]]:
        """(conv length, pooled length) per block; raises if the input underflows."""
        out = []
        L = input_length
        for b in self.layers:
            Lc = conv_output_length(L, b.kernel_size, b.dilation)
            L = Lc // b.pool_size
            if L < 1:
                raise ValueError(f"pool {b.pool_size} exceeds conv output length {Lc}")
            out.append((Lc, L))
        return out

    def flat_size(self, input_length: int) -> int:
        return self.shapes(input_length)[-1][1] * self.layers[-1].filters

    def receptive_field(self) -> int:
        """Input span seen by one output of the conv stack (pooling ignored)."""
        return 1 + sum((b.kernel_size - 1) * b.dilation for b in self.layers)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(b) for b in self.layers]
        return d


def dcnn_dilation_schedule(n_layers: int, kind: str = "exponential") -> list[int]:
    if not 1 <= n_layers <= MAX_BLOCKS:
        raise ValueError(f"n_layers must lie in 1..{MAX_BLOCKS}")
    if kind == "exponential":
        return [2 ** i for i in range(n_layers)]
    if kind == "linear":
        return list(range(1, n_layers + 1))
    raise ValueError("schedule must be 'exponential' or 'linear'")


# Tuned rows for one and two conv blocks per MFCC size; deeper stacks keep
# doubling the filter count.
_TUNED = {
    1: {40: dict(batch_size=32, epochs=10, dense_units=128, filters=[64], kernels=[5], optimizer="adam"),
        50: dict(batch_size=32, epochs=10, dense_units=128, filters=[64], kernels=[3], optimizer="rmsprop"),
        60: dict(batch_size=32, epochs=10, dense_units=128, filters=[64], kernels=[5], optimizer="rmsprop")},
    2: {40: dict(batch_size=32, epochs=20, dense_units=64, filters=[64, 128], kernels=[5, 5], optimizer="adam"),
        50: dict(batch_size=64, epochs=20, dense_units=128, filters=[128, 256], kernels=[3, 5], optimizer="adam"),
        60: dict(batch_size=64, epochs=20, dense_units=256, filters=[64, 128], kernels=[5, 5], optimizer="adam")},
}


def default_spec(n_layers: int, mfcc_dim: int = 40, dilated: bool = False, input_length: int | None = None,
                 schedule: str = "exponential", max_filters: int = 256) -> CnnSpec:
    """Architecture for an ``n_layers`` CNN (or DCNN) on inputs of ``input_length``.

    Pool size 2 is used wherever the remaining blocks still fit; otherwise 1.
    Kernels that no longer fit shrink to 3.
    """
    if not 1 <= n_layers <= MAX_BLOCKS:
        raise ValueError(f"n_layers must lie in 1..{MAX_BLOCKS}")
    L = input_length or mfcc_dim
    base = _TUNED[min(n_layers, 2)]
    row = base[min(base, key=lambda d: (abs(d - mfcc_dim), d))]
    filters = list(row["filters"])
    kernels = list(row["kernels"])
    while len(filters) < n_layers:
        filters.append(min(filters[-1] * 2, max_filters))
        kernels.append(3)
    dil = dcnn_dilation_schedule(n_layers, schedule) if dilated else [1] * n_layers

    def fits(L, start, pools):
        for i in range(start, n_layers):
            L = L - (kernels[i] - 1) * dil[i]
            if L < 1:
                return False
            L //= pools[i]
        return L >= 1

    pools = [1] * n_layers
    for i in range(n_layers):
        while not fits(L, 0, pools) and kernels[i] > 3:
            kernels[i] = 3
        trial = pools.copy()
        trial[i] = 2
        if fits(L, 0, trial):
            pools = trial
    if not fits(L, 0, pools):
        raise ValueError(f"no {n_layers}-block architecture fits input length {L}")
    layers = tuple(ConvBlock(f, k, d, p) for f, k, d, p in zip(filters, kernels, dil, pools))
    name = f"{'1D-DCNN' if dilated else '1D-CNN'} {n_layers}L"
    return CnnSpec(layers, row["dense_units"], row["optimizer"], row["batch_size"], row["epochs"],
                   name=name)


# ------------------------------------------------------------------ network

def init_params(spec: CnnSpec, input_length: int, rng) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases.  Order: conv W/b per block, dense, output."""
    params = []
    c_in = 1
    for b in spec.layers:
        fan_in, fan_out = b.kernel_size * c_in, b.kernel_size * b.filters
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        params += [rng.uniform(-lim, lim, (b.kernel_size, c_in, b.filters)), np.zeros(b.filters)]
        c_in = b.filters
    flat = spec.flat_size(input_length)
    for fi, fo in ((flat, spec.dense_units), (spec.dense_units, 1)):
        lim = np.sqrt(6.0 / (fi + fo))
        params += [rng.uniform(-lim, lim, (fi, fo)), np.zeros(fo)]
    return params


def _as_input(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3 or X.shape[2] != 1:
        raise ValueError(f"CNN input must be (N, d) or (N, d, 1), got {X.shape}")
    return X


def cnn_forward(spec: CnnSpec, params, X, keep_cache: bool = False):
    """Logits for a batch; with ``keep_cache`` also the activations needed for backprop."""
    a = _as_input(X)
    n_blocks = len(spec.layers)
    if len(params) != 2 * n_blocks + 4:
        raise ValueError("parameter list does not match the spec")
    cache = []
    for i, b in enumerate(spec.layers):
        W, bias = params[2 * i], params[2 * i + 1]
        if W.shape[1] != a.shape[2]:
            raise ValueError(f"block {i} expects {W.shape[1]} channels, got {a.shape[2]}")
        z = conv1d_forward(a, W, bias, b.dilation)
        r = np.maximum(z, 0.0)
        p, idx = maxpool1d(r, b.pool_size, return_indices=True)
        if keep_cache:
            cache.append((a, z, idx))
        a = p
    flat = a.reshape(len(a), -1)
    Wd, bd, Wo, bo = params[-4:]
    if flat.shape[1] != Wd.shape[0]:
        raise ValueError(f"flattened size {flat.shape[1]} does not match dense input {Wd.shape[0]}")
    zd = flat @ Wd + bd
    hd = np.maximum(zd, 0.0)
    logit = (hd @ Wo + bo)[:, 0]
    if keep_cache:
        return logit, (cache, a.shape, flat, zd, hd)
    return logit


def cnn_predict_proba(spec, params, X):
    return sigmoid(cnn_forward(spec, params, X))


def cnn_backward(spec: CnnSpec, params, cache, logit, y):
    """Gradients of the mean binary cross-entropy with respect to every parameter."""
    blocks, pooled_shape, flat, zd, hd = cache
    n = len(y)
    Wd, bd, Wo, bo = params[-4:]
    dlogit = ((sigmoid(logit) - y) / n)[:, None]
    dhd, dWo, dbo = dense_backward(dlogit, hd, Wo)
    dzd = dhd * (zd > 0)
    dflat, dWd, dbd = dense_backward(dzd, flat, Wd)
    grads = [None] * (2 * len(spec.layers)) + [dWd, dbd, dWo, dbo]
    da = dflat.reshape(pooled_shape)
    for i in range(len(spec.layers) - 1, -1, -1):
        b = spec.layers[i]
        a_in, z, idx = blocks[i]
        dr = maxpool1d_backward(da, idx, z.shape[1], b.pool_size)
        dz = dr * (z > 0)
        da, dW, db = conv1d_backward(dz, a_in, params[2 * i], b.dilation)
        grads[2 * i], grads[2 * i + 1] = dW, db
    return grads


def cnn_loss_grad(spec, params, X, y):
    y = np.asarray(y, dtype=np.float64)
    logit, cache = cnn_forward(spec, params, X, keep_cache=True)
    loss = float(np.mean(log1pexp(logit) - y * logit))
    return loss, cnn_backward(spec, params, cache, logit, y)


def bce_from_logits(logit, y) -> float:
    return float(np.mean(log1pexp(logit) - y * logit))


# --------------------------------------------------------------- classifier

class CNNClassifier(BinaryClassifier):
    family = "cnn"
    display_name = "1D-CNN"

    def __init__(self, layers=({"filters": 64, "kernel_size": 5},), dense_units: int = 128,
                 optimizer: str = "adam", batch_size: int | None = 32, epochs: int = 10,
                 learning_rate: float = 1e-3, patience: int | None = 2, val_fraction: float = 0.1,
                 name: str = "", seed: int = 0):
        self.layers = [asdict(b) if isinstance(b, ConvBlock) else dict(b) for b in layers]
        self.dense_units, self.optimizer, self.batch_size = dense_units, optimizer, batch_size
        self.epochs, self.learning_rate = epochs, learning_rate
        self.patience, self.val_fraction, self.name, self.seed = patience, val_fraction, name, seed
        self.spec = CnnSpec(tuple(self.layers), dense_units, optimizer, batch_size, epochs,
                            learning_rate, patience, val_fraction, name)

    @classmethod
    def from_spec(cls, spec: CnnSpec, seed: int = 0) -> "CNNClassifier":
        d = spec.to_dict()
        return cls(seed=seed, **d)

    def _fit(self, X, y):
        spec = self.spec
        X3 = _as_input(X)
        spec.shapes(X3.shape[1])
        rng = np.random.default_rng(self.seed)
        yf = y.astype(np.float64)
        tr, val = np.arange(len(y)), None
        k = int(round(1.0 / spec.val_fraction)) if spec.val_fraction > 0 else 0
        if spec.patience is not None and k >= 2 and np.bincount(y, minlength=2).min() >= k:
            fold = _stratified_folds(y, k, self.seed)
            tr, val = np.flatnonzero(fold != 0), np.flatnonzero(fold == 0)
        bs = len(tr) if spec.batch_size is None else spec.batch_size
        if len(tr) < bs:
            raise ValueError(f"{len(tr)} training rows is fewer than batch size {bs}")
        params = init_params(spec, X3.shape[1], rng)
        opt = make_optimizer(spec.optimizer, params, spec.learning_rate)
        stopper = EarlyStopping(spec.patience) if val is not None else None
        curve = []
        for epoch in range(spec.epochs):
            perm = tr[rng.permutation(len(tr))] if bs < len(tr) else tr
            total = 0.0
            for s in range(0, len(perm), bs):
                b = perm[s:s + bs]
                loss, grads = cnn_loss_grad(spec, params, X3[b], yf[b])
                if not np.isfinite(loss):
                    raise TrainingError(f"CNN loss became non-finite at epoch {epoch}")
                opt.step(grads)
                total += loss * len(b)
            row = [total / len(perm)]
            if stopper is not None:
                row.append(bce_from_logits(cnn_forward(spec, params, X3[val]), yf[val]))
                curve.append(row)
                if stopper.update(epoch, row[1], params):
                    break
            else:
                curve.append(row + [np.nan])
        best_epoch = len(curve) - 1
        if stopper is not None and stopper.snapshot is not None:
            params, best_epoch = stopper.snapshot, stopper.best_epoch
        return {"params": params, "curve": np.array(curve), "best_epoch": int(best_epoch),
                "input_length": int(X3.shape[1])}

    def _proba1(self, X):
        return cnn_predict_proba(self.spec, self.state_["params"], X)

    def inference_cost(self):
        """Multiply-accumulates per sample."""
        L = self.state_["input_length"]
        macs, c_in = 0, 1
        for (Lc, _), b in zip(self.spec.shapes(L), self.spec.layers):
            macs += Lc * b.kernel_size * c_in * b.filters
            c_in = b.filters
        return float(macs + self.spec.flat_size(L) * self.dense_units + self.dense_units)


def train_cnn(spec: CnnSpec, X, y, seed: int = 0) -> CNNClassifier:
    return CNNClassifier.from_spec(spec, seed).fit(X, y)
