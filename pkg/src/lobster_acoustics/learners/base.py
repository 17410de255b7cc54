"""Shared estimator plumbing: the binary-classifier protocol, serialization
envelope and array encoding."""

from __future__ import annotations

import base64
import copy
import inspect
import json
from typing import Any, ClassVar

import numpy as np

MODEL_VERSION = 1

_REGISTRY: dict[str, type["BinaryClassifier"]] = {}


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss, failed fold, ...)."""


class ConvergenceError(TrainingError):
    """A solver stopped before reaching its tolerance.

    ``state`` carries the best iterate reached, so callers can inspect or use it.
    """

    def __init__(self, message: str, state: Any = None):
        super().__init__(message)
        self.state = state


class NotFittedError(RuntimeError):
    pass


def encode_array(a: np.ndarray, mode: str = "decimal"):
    a = np.asarray(a)
    if mode == "decimal":
        return {"shape": list(a.shape), "dtype": str(a.dtype), "data": a.ravel().tolist()}
    if mode == "base64":
        kind = "<i8" if a.dtype.kind in "iub" else "<f8"
        raw = np.ascontiguousarray(a, dtype=kind).tobytes()
        return {"shape": list(a.shape), "dtype": kind, "b64": base64.b64encode(raw).decode("ascii")}
    raise ValueError(f"unknown array encoding {mode!r}")


def decode_array(obj) -> np.ndarray:
    if "b64" in obj:
        raw = base64.b64decode(obj["b64"])
        return np.frombuffer(raw, dtype=obj["dtype"]).reshape(obj["shape"]).copy()
    dtype = obj.get("dtype", "float64")
    return np.asarray(obj["data"], dtype=dtype).reshape(obj["shape"])


def _encode(value, mode):
    if isinstance(value, np.ndarray):
        return {"__array__": encode_array(value, mode)}
    if isinstance(value, dict):
        return {k: _encode(v, mode) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v, mode) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _decode(value):
    if isinstance(value, dict):
        if "__array__" in value:
            return decode_array(value["__array__"])
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


def _freeze(value):
    if isinstance(value, np.ndarray):
        value.setflags(write=False)
    elif isinstance(value, dict):
        for v in value.values():
            _freeze(v)
    elif isinstance(value, (list, tuple)):
        for v in value:
            _freeze(v)


def check_binary(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("targets must be one-dimensional")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("targets must be binary 0/1 labels")
    return y.astype(np.int64)


def check_X(X, n_features: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature array, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    if len(X) == 0:
        raise ValueError("empty input")
    return X


class BinaryClassifier:
    """Base class for the from-scratch learners.

    Hyperparameters are constructor keyword arguments.  ``fit`` stores the
    learned state in ``self.state_`` (a dict of arrays and scalars) and marks
    every array read-only; a fitted model is never mutated afterwards.
    """

    family: ClassVar[str] = ""
    display_name: ClassVar[str] = ""

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        if cls.family:
            _REGISTRY[cls.family] = cls

    # hyperparameters ------------------------------------------------------
    def get_params(self) -> dict:
        sig = inspect.signature(type(self).__init__)
        return {name: getattr(self, name) for name in sig.parameters if name != "self"}

    def clone(self, **overrides) -> "BinaryClassifier":
        params = copy.deepcopy(self.get_params())
        params.update(overrides)
        return type(self)(**params)

    # fitting --------------------------------------------------------------
    def fit(self, X, y) -> "BinaryClassifier":
        if getattr(self, "state_", None) is not None:
            raise RuntimeError("model is already fitted; use clone() for a fresh copy")
        X = check_X(X)
        y = check_binary(y)
        if len(X) != len(y):
            raise ValueError("X and y lengths differ")
        state = self._fit(X, y)
        _freeze(state)
        self.state_ = state
        self.n_features_ = X.shape[1]
        return self

    def _fit(self, X, y) -> dict:
        raise NotImplementedError

    def _check_fitted(self):
        if getattr(self, "state_", None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_X(X, self.n_features_)
        p1 = np.clip(self._proba1(X), 0.0, 1.0)
        return np.column_stack([1.0 - p1, p1])

    def _proba1(self, X) -> np.ndarray:
        raise NotImplementedError

    def decision_function(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)

    def inference_cost(self) -> float:
        """Deterministic proxy for prediction work (used for grid tie-breaks)."""
        return 0.0

    # serialization --------------------------------------------------------
    def to_dict(self, arrays: str = "decimal", seed=None, preprocessing=None) -> dict:
        self._check_fitted()
        return {"family": self.family, "version": MODEL_VERSION,
                "hyperparams": _encode(self.get_params(), arrays),
                "parameters": _encode(self.state_, arrays),
                "n_features": self.n_features_,
                "preprocessing": preprocessing or {},
                "seed": seed}

    def to_json(self, arrays: str = "decimal", **kw) -> str:
        return json.dumps(self.to_dict(arrays, **kw), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BinaryClassifier":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        klass = registry()[d["family"]]
        model = klass(**_decode(d["hyperparams"]))
        state = _decode(d["parameters"])
        _freeze(state)
        model.state_ = state
        model.n_features_ = int(d["n_features"])
        return model

    @classmethod
    def from_json(cls, text: str) -> "BinaryClassifier":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def registry() -> dict[str, type[BinaryClassifier]]:
    """All model families, including the neural ones (imported on demand)."""
    if "cnn" not in _REGISTRY:
        from .. import neural  # noqa: F401  (registers the CNN family)
    return dict(_REGISTRY)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log1pexp(z):
    """Numerically stable ``log(1 + exp(z))``."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))
