"""MFCC extraction (STFT, mel filterbank, log, DCT), time pooling, PCA and
feature-matrix containers."""

from __future__ import annotations

import csv
import io
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.fft import dct

LOG_EPS = 1e-10
PCA_VERSION = 1


@dataclass(frozen=True)
class MfccConfig:
    n_mfcc: int = 40
    n_fft: int = 2048
    hop: int = 512
    n_mels: int = 128
    fmin: float = 50.0
    fmax: float = 8000.0
    sample_rate: int = 22050
    center: bool = False  # True: zero-pad n_fft // 2 on both sides before framing

    def __post_init__(self):
        if self.n_mfcc < 1 or self.n_mfcc > self.n_mels:
            raise ValueError("need 1 <= n_mfcc <= n_mels")
        if self.hop < 1 or self.hop > self.n_fft:
            raise ValueError("need 1 <= hop <= n_fft")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError("need 0 <= fmin < fmax <= sample_rate / 2")


@dataclass(frozen=True)
class MfccSequence:
    frames: np.ndarray  # (T, n_mfcc)
    config: MfccConfig


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (the usual choice for spectral analysis)."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def n_frames(length: int, config: MfccConfig) -> int:
    if config.center:
        length += 2 * (config.n_fft // 2)
    return 1 + (length - config.n_fft) // config.hop


def frame_signal(x: np.ndarray, config: MfccConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if config.center:
        pad = config.n_fft // 2
        x = np.pad(x, (pad, pad))
    if len(x) < config.n_fft:
        raise ValueError(f"segment of {len(x)} samples is shorter than n_fft={config.n_fft}")
    T = 1 + (len(x) - config.n_fft) // config.hop
    idx = np.arange(config.n_fft)[None, :] + config.hop * np.arange(T)[:, None]
    return x[idx]


def stft_power(x, config: MfccConfig) -> np.ndarray:
    """Hann-windowed power spectrogram, shape ``(T, n_fft // 2 + 1)``."""
    frames = frame_signal(x, config) * hann(config.n_fft)
    spec = np.fft.rfft(frames, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fmin: float, fmax: float, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters equally spaced on the (HTK) mel scale, area-normalised.

    Filter ``i`` rises from edge ``i`` to a peak at edge ``i + 1`` and falls to
    edge ``i + 2``; each row is scaled by ``2 / (f[i+2] - f[i])``.
    """
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError("need 0 <= fmin < fmax <= Nyquist")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower = (bins[None, :] - edges[:-2, None]) / (edges[1:-1] - edges[:-2])[:, None]
    upper = (edges[2:, None] - bins[None, :]) / (edges[2:] - edges[1:-1])[:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    empty = np.flatnonzero(weights.sum(axis=1) <= 0)
    if len(empty):
        raise ValueError(f"{len(empty)} mel filter(s) have no FFT bins in their support; "
                         f"reduce n_mels or increase n_fft")
    return weights


def mel_centers(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))[1:-1]


_FB_CACHE: dict[tuple, np.ndarray] = {}


def _filterbank(config: MfccConfig) -> np.ndarray:
    key = (config.n_mels, config.fmin, config.fmax, config.n_fft, config.sample_rate)
    fb = _FB_CACHE.get(key)
    if fb is None:
        fb = mel_filterbank(*key)
        fb.setflags(write=False)
        _FB_CACHE[key] = fb
    return fb


def mfcc(x, config: MfccConfig) -> MfccSequence:
    """Orthonormal DCT-II of ``log(mel power + 1e-10)``, first ``n_mfcc`` kept."""
    power = stft_power(x, config)
    mel = power @ _filterbank(config).T
    coeffs = dct(np.log(mel + LOG_EPS), type=2, norm="ortho", axis=1)[:, :config.n_mfcc]
    return MfccSequence(coeffs, config)


def mean_pool(seq: MfccSequence | np.ndarray) -> np.ndarray:
    frames = np.asarray(getattr(seq, "frames", seq), dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("mean_pool needs at least one frame")
    return frames.mean(axis=0)


# ------------------------------------------------------------ feature matrix

@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-D array")
        labels = np.asarray(self.labels, dtype=object)
        groups = np.asarray(self.groups, dtype=object)
        if not len(rows) == len(labels) == len(groups):
            raise ValueError("rows, labels and groups must have equal length")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(rows.shape[1]))
        if len(names) != rows.shape[1]:
            raise ValueError("feature_names length does not match column count")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return len(self.rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def subset(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(self.rows[idx], self.labels[idx], self.groups[idx], self.feature_names)


def extract_features(segments: Sequence, config: MfccConfig, preprocess=None) -> FeatureMatrix:
    """Time-averaged MFCC vector per segment (optionally after ``preprocess``)."""
    rows = []
    for s in segments:
        x = s.samples if preprocess is None else preprocess(s.samples, s.sample_rate)
        rows.append(mean_pool(mfcc(x, config)))
    rows = np.array(rows).reshape(len(rows), config.n_mfcc)
    return FeatureMatrix(rows, [s.label for s in segments], [s.individual_id for s in segments])


def write_features_csv(fm: FeatureMatrix, path: str | Path) -> None:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([f"f{i}" for i in range(fm.dim)] + ["label", "group"])
    for row, lab, grp in zip(fm.rows, fm.labels, fm.groups):
        w.writerow([repr(float(v)) for v in row] + [lab, grp])
    _atomic_write(Path(path), out.getvalue().encode())


def read_features_csv(path: str | Path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-2:] != ["label", "group"]:
            raise ValueError("feature CSV must end with label,group columns")
        d = len(header) - 2
        if header[:d] != [f"f{i}" for i in range(d)]:
            raise ValueError("feature columns must be named f0..f{d-1}")
        rows, labels, groups = [], [], []
        for rec in reader:
            rows.append([float(v) for v in rec[:d]])
            labels.append(rec[d])
            groups.append(rec[d + 1])
    return FeatureMatrix(np.array(rows).reshape(len(rows), d), labels, groups)


FEATURE_MAGIC = b"LBFM"
FEATURE_VERSION = 1


def _pack_strings(items) -> bytes:
    out = bytearray()
    for s in items:
        b = str(s).encode("utf-8")
        out += struct.pack("<I", len(b)) + b
    return bytes(out)


def _unpack_strings(buf: bytes, pos: int, n: int):
    out = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        out.append(buf[pos:pos + ln].decode("utf-8"))
        pos += ln
    return out, pos


def features_to_bytes(fm: FeatureMatrix) -> bytes:
    """Little-endian container: magic, version, N, d, row-major float64 block,
    then length-prefixed UTF-8 labels and groups."""
    head = FEATURE_MAGIC + struct.pack("<IQI", FEATURE_VERSION, len(fm), fm.dim)
    block = np.ascontiguousarray(fm.rows, dtype="<f8").tobytes()
    return head + block + _pack_strings(fm.labels) + _pack_strings(fm.groups)


def features_from_bytes(buf: bytes) -> FeatureMatrix:
    if buf[:4] != FEATURE_MAGIC:
        raise ValueError("not a feature container (bad magic)")
    version, n, d = struct.unpack_from("<IQI", buf, 4)
    if version != FEATURE_VERSION:
        raise ValueError(f"unsupported feature container version {version}")
    pos = 4 + struct.calcsize("<IQI")
    rows = np.frombuffer(buf, dtype="<f8", count=n * d, offset=pos).reshape(n, d).copy()
    pos += 8 * n * d
    labels, pos = _unpack_strings(buf, pos, n)
    groups, pos = _unpack_strings(buf, pos, n)
    return FeatureMatrix(rows, labels, groups)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


# ----------------------------------------------------------------------- PCA

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows orthonormal
    explained_variance_ratio: np.ndarray
    eigenvalues: np.ndarray
    rank_deficient: bool = False

    @property
    def tev(self) -> float:
        return float(self.explained_variance_ratio.sum())

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, X) -> np.ndarray:
        X = np.asarray(getattr(X, "rows", X), dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.mean):
            raise ValueError(f"expected {len(self.mean)} columns, got shape {X.shape}")
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean

    def to_json(self) -> str:
        return json.dumps({"version": PCA_VERSION, "mean": self.mean.tolist(),
                           "components": self.components.tolist(),
                           "ratios": self.explained_variance_ratio.tolist(),
                           "eigenvalues": self.eigenvalues.tolist(),
                           "rank_deficient": self.rank_deficient})

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        d = json.loads(text)
        if d.get("version") != PCA_VERSION:
            raise ValueError(f"unsupported PCA version {d.get('version')}")
        return cls(np.asarray(d["mean"], float), np.asarray(d["components"], float),
                   np.asarray(d["ratios"], float), np.asarray(d["eigenvalues"], float),
                   bool(d.get("rank_deficient", False)))


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` eigenvectors of the sample covariance.

    Each component is sign-flipped so its largest-magnitude entry is positive.
    If ``k`` exceeds the numerical rank, the surplus ratios are reported as 0
    and ``rank_deficient`` is set.
    """
    X = np.asarray(getattr(X, "rows", X), dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d={d} (got {k})")
    if n <= k:
        raise ValueError(f"need more rows than components (N={n}, k={k})")
    mean = X.mean(axis=0)
    C = np.cov(X - mean, rowvar=False, ddof=1).reshape(d, d)
    evals, evecs = np.linalg.eigh(C)
    order = np.argsort(evals, kind="stable")[::-1]
    evals, evecs = evals[order], evecs[:, order]
    total = max(float(np.trace(C)), 0.0)
    tol = max(d, n) * np.finfo(float).eps * max(evals[0], 0.0)
    evals = np.where(evals > tol, evals, 0.0)
    rank = int(np.count_nonzero(evals))
    comps = evecs[:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    ratios = evals[:k] / total if total > 0 else np.zeros(k)
    deficient = k > rank
    if deficient:
        warnings.warn(f"PCA: k={k} exceeds data rank {rank}; trailing ratios are 0",
                      RuntimeWarning, stacklevel=2)
    for a in (mean, comps, ratios):
        a.setflags(write=False)
    return PcaModel(mean, comps, ratios, evals[:k].copy(), deficient)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    return model.transform(X)
