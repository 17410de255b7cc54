"""Preprocessing chain: Butterworth high-pass / band-pass biquad cascades,
energy-based segment screening and z-score standardisation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal

SCALER_VERSION = 1
ZSCORE_EPS = 1e-12


@dataclass(frozen=True)
class BiquadCascade:
    """Second-order sections, one row ``(b0, b1, b2, a1, a2)`` per stage (a0 = 1)."""
    stages: np.ndarray
    kind: str
    corners: tuple[float, ...]
    order: int
    sample_rate: int

    def sos(self) -> np.ndarray:
        s = self.stages
        return np.column_stack([s[:, 0], s[:, 1], s[:, 2], np.ones(len(s)), s[:, 3], s[:, 4]])

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response evaluated on the unit circle."""
        z = np.exp(1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.sample_rate)
        h = np.ones_like(z)
        for b0, b1, b2, a1, a2 in self.stages:
            h = h * (b0 + b1 / z + b2 / z ** 2) / (1 + a1 / z + a2 / z ** 2)
        return h

    def is_stable(self) -> bool:
        for _, _, _, a1, a2 in self.stages:
            if np.any(np.abs(np.roots([1.0, a1, a2])) >= 1.0):
                return False
        return True

    def describe(self) -> dict:
        return {"kind": self.kind, "corners_hz": list(self.corners), "order": self.order,
                "sample_rate": self.sample_rate}


def _prewarp(f_hz: float, fs: float) -> float:
    return 2.0 * fs * np.tan(np.pi * f_hz / fs)


def _bilinear(p: np.ndarray, fs: float) -> np.ndarray:
    return (2 * fs + p) / (2 * fs - p)


def _group_poles(poles: np.ndarray) -> list[np.ndarray]:
    """Split z-plane poles into conjugate pairs (real poles paired together)."""
    upper = sorted((p for p in poles if p.imag > 1e-12), key=lambda p: (abs(p), p.real))
    real = sorted(p.real for p in poles if abs(p.imag) <= 1e-12)
    pairs = [np.array([p, np.conj(p)]) for p in upper]
    for i in range(0, len(real), 2):
        pairs.append(np.array(real[i:i + 2], dtype=complex))
    return pairs


def design_filter(kind: str, corners, order: int, sample_rate: int) -> BiquadCascade:
    """Digital Butterworth filter as a cascade of biquads.

    ``kind='highpass'`` takes one corner, ``kind='bandpass'`` a ``(low, high)``
    pair.  ``order`` is the total filter order (2, 4 or 8); a band-pass of
    order 4 therefore has two sections.  Corners are pre-warped so the
    digital response is -3 dB exactly at each corner.
    """
    if order not in (2, 4, 8):
        raise ValueError(f"order must be one of 2, 4, 8 (got {order})")
    fs = float(sample_rate)
    nyq = fs / 2
    corners = tuple(float(c) for c in np.atleast_1d(corners))
    if kind == "highpass":
        if len(corners) != 1:
            raise ValueError("highpass takes a single corner frequency")
        n_proto = order
    elif kind == "bandpass":
        if len(corners) != 2 or corners[0] >= corners[1]:
            raise ValueError("bandpass takes (low, high) with low < high")
        n_proto = order // 2
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    for c in corners:
        if not 0 < c < nyq:
            raise ValueError(f"corner {c} Hz outside (0, {nyq}) Hz")

    k = np.arange(n_proto)
    proto = np.exp(1j * np.pi * (2 * k + n_proto + 1) / (2 * n_proto))

    if kind == "highpass":
        wc = _prewarp(corners[0], fs)
        s_poles = wc / proto
        zero_sets = [np.array([1.0, 1.0])] * (order // 2)
        f_ref = nyq
    else:
        w1, w2 = _prewarp(corners[0], fs), _prewarp(corners[1], fs)
        bw, w0sq = w2 - w1, w1 * w2
        root = np.sqrt((proto * bw) ** 2 - 4 * w0sq + 0j)
        s_poles = np.concatenate([(proto * bw + root) / 2, (proto * bw - root) / 2])
        zero_sets = [np.array([1.0, -1.0])] * (order // 2)
        f_ref = fs / np.pi * np.arctan(np.sqrt(w0sq) / (2 * fs))

    z_poles = _bilinear(s_poles, fs)
    stages = []
    for zeros, pair in zip(zero_sets, _group_poles(z_poles)):
        b = np.real(np.poly(zeros))
        a = np.real(np.poly(pair))
        stages.append([b[0], b[1], b[2], a[1], a[2]])
    stages = np.array(stages)

    cascade = BiquadCascade(stages, kind, corners, order, int(sample_rate))
    gain = 1.0 / abs(cascade.response([f_ref])[0])
    per_stage = gain ** (1.0 / len(stages))
    stages[:, :3] *= per_stage
    stages.setflags(write=False)
    return BiquadCascade(stages, kind, corners, order, int(sample_rate))


def apply_filter(cascade: BiquadCascade, samples, sample_rate: int | None = None) -> np.ndarray:
    """Causal single-pass filtering from a zero initial state."""
    if sample_rate is not None and sample_rate != cascade.sample_rate:
        raise ValueError(f"segment rate {sample_rate} Hz does not match filter "
                         f"rate {cascade.sample_rate} Hz")
    x = np.asarray(samples, dtype=np.float64)
    return signal.sosfilt(cascade.sos(), x, axis=-1)


@dataclass(frozen=True)
class PreprocessChain:
    highpass: BiquadCascade
    bandpass: BiquadCascade

    @classmethod
    def build(cls, sample_rate: int, highpass_hz: float = 35.0, highpass_order: int = 2,
              band_hz=(50.0, 8000.0), bandpass_order: int = 4) -> "PreprocessChain":
        if not 20.0 <= highpass_hz <= 50.0:
            raise ValueError("high-pass cutoff must lie in [20, 50] Hz")
        return cls(design_filter("highpass", highpass_hz, highpass_order, sample_rate),
                   design_filter("bandpass", band_hz, bandpass_order, sample_rate))

    def __call__(self, samples, sample_rate: int | None = None) -> np.ndarray:
        return apply_filter(self.bandpass, apply_filter(self.highpass, samples, sample_rate),
                            sample_rate)

    def describe(self) -> dict:
        return {"highpass": self.highpass.describe(), "bandpass": self.bandpass.describe()}


# ------------------------------------------------------------- SNR screening

@dataclass(frozen=True)
class SnrPolicy:
    """Keep a segment iff its RMS level (dB) is at least ``threshold_db`` above
    the ``percentile``-th percentile of all segment levels."""
    threshold_db: float = 6.0
    percentile: float = 10.0

    def __post_init__(self):
        if not 0 < self.percentile < 100:
            raise ValueError("percentile must lie strictly between 0 and 100")


def rms_db(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return float(20.0 * np.log10(np.sqrt(np.mean(x * x)) + 1e-20))


def snr_screen(segments: Sequence, policy: SnrPolicy = SnrPolicy(), floor_db: float | None = None):
    """Partition ``segments`` into (kept, discarded, floor_db), order preserved.

    Items may be arrays or objects with a ``samples`` attribute.  Pass
    ``floor_db`` to reuse a previously estimated noise floor.
    """
    if len(segments) == 0:
        raise ValueError("snr_screen needs at least one segment")
    levels = np.array([rms_db(getattr(s, "samples", s)) for s in segments])
    if floor_db is None:
        floor_db = float(np.percentile(levels, policy.percentile))
    keep = levels - floor_db >= policy.threshold_db
    kept = [s for s, k in zip(segments, keep) if k]
    discarded = [s for s, k in zip(segments, keep) if not k]
    return kept, discarded, floor_db


# ---------------------------------------------------------------- z-scoring

@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    epsilon: float = ZSCORE_EPS

    @property
    def constant(self) -> np.ndarray:
        return self.std < self.epsilon

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.mean):
            raise ValueError(f"expected {len(self.mean)} columns, got shape {X.shape}")
        safe = np.where(self.constant, 1.0, self.std)
        Z = (X - self.mean) / safe
        Z[:, self.constant] = 0.0
        return Z

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z * np.where(self.constant, 0.0, self.std) + self.mean

    def to_json(self) -> str:
        return json.dumps({"version": SCALER_VERSION, "mean": self.mean.tolist(),
                           "std": self.std.tolist(), "epsilon": self.epsilon})

    @classmethod
    def from_json(cls, text: str) -> "Scaler":
        d = json.loads(text)
        if d.get("version") != SCALER_VERSION:
            raise ValueError(f"unsupported scaler version {d.get('version')}")
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), float(d["epsilon"]))


def zscore_fit(X, epsilon: float = ZSCORE_EPS) -> Scaler:
    """Per-column mean and population standard deviation."""
    X = np.asarray(getattr(X, "rows", X), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("zscore_fit needs at least two rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    mean.setflags(write=False)
    std.setflags(write=False)
    return Scaler(mean, std, epsilon)


def zscore_apply(X, scaler: Scaler) -> np.ndarray:
    return scaler.transform(getattr(X, "rows", X))
