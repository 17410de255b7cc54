"""Audio ingest: WAV decoding, dataset manifests, 1 s segmentation and a
deterministic synthetic lobster-sound generator."""

from __future__ import annotations

import csv
import enum
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_SAMPLE_RATE = 22050

# Individuals and recording seconds per (sex, age) group of the reference dataset.
REFERENCE_GROUP_DURATIONS = {
    ("F", "juvenile"): 1200,
    ("M", "juvenile"): 1200,
    ("M", "adult"): 3207,
    ("F", "adult"): 1700,
}
REFERENCE_INDIVIDUALS_PER_GROUP = 6


class IngestError(Exception):
    """Base class for ingest failures."""


class WavFormatError(IngestError):
    """The byte stream is not a well-formed RIFF/WAVE file."""


class UnsupportedCodecError(IngestError):
    """The WAVE file uses an encoding other than PCM16 or float32."""


class EmptyAudioError(IngestError):
    """The WAVE data chunk holds no samples."""


class ManifestError(IngestError):
    pass


class SampleRateMismatch(IngestError):
    pass


class Sex(str, enum.Enum):
    MALE = "M"
    FEMALE = "F"

    @classmethod
    def parse(cls, value: str) -> "Sex":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        if v in ("m", "male"):
            return cls.MALE
        if v in ("f", "female"):
            return cls.FEMALE
        raise ValueError(f"unknown sex label {value!r}")


class Age(str, enum.Enum):
    ADULT = "adult"
    JUVENILE = "juvenile"

    @classmethod
    def parse(cls, value: str) -> "Age":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        for member in cls:
            if member.value == v:
                return member
        raise ValueError(f"unknown age label {value!r}")


def stratum_label(sex: Sex, age: Age) -> str:
    """Canonical 4-way label used in feature files, e.g. ``F-adult``."""
    return f"{Sex.parse(sex).value}-{Age.parse(age).value}"


def parse_stratum(label: str) -> tuple[Sex, Age]:
    sex, _, age = label.partition("-")
    return Sex.parse(sex), Age.parse(age)


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AudioSegment:
    samples: np.ndarray
    sample_rate: int
    individual_id: str
    sex: Sex
    age: Age
    source_offset: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if len(s) != self.sample_rate:
            raise ValueError(
                f"segment must hold exactly {self.sample_rate} samples, got {len(s)}")
        object.__setattr__(self, "sex", Sex.parse(self.sex))
        object.__setattr__(self, "age", Age.parse(self.age))
        object.__setattr__(self, "samples", s)

    @property
    def label(self) -> str:
        return stratum_label(self.sex, self.age)


# ---------------------------------------------------------------- WAV codec

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte stream (PCM16 or float32, any channel count).

    Channels are averaged to mono and PCM16 is scaled by 1/32768.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("missing RIFF/WAVE header")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError("fmt chunk too short")
            fmt = body
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError("no fmt chunk")
    if payload is None:
        raise WavFormatError("no data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise WavFormatError("extensible fmt chunk too short")
        (tag,) = struct.unpack("<H", fmt[24:26])
    if channels == 0 or rate == 0:
        raise WavFormatError("zero channels or sample rate")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedCodecError(f"format tag {tag:#06x} with {bits} bits")

    frame = dtype.itemsize * channels
    n_frames = len(payload) // frame
    if n_frames == 0:
        raise EmptyAudioError("data chunk holds no complete frames")
    raw = np.frombuffer(payload[:n_frames * frame], dtype=dtype)
    samples = raw.astype(np.float64).reshape(n_frames, channels).mean(axis=1) * scale
    return AudioClip(samples, rate)


def encode_wav(samples: np.ndarray, sample_rate: int, codec: str = "pcm16") -> bytes:
    """Encode mono samples in [-1, 1] as a RIFF/WAVE byte string."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]
    if codec == "pcm16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        tag, bits = _WAVE_FORMAT_PCM, 16
    elif codec == "float32":
        q = x.astype("<f4")
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise UnsupportedCodecError(codec)
    payload = q.tobytes()
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, sample_rate, sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def read_wav(path: str | Path) -> AudioClip:
    return decode_wav(Path(path).read_bytes())


# ------------------------------------------------------------- segmentation

def segment_clip(clip: AudioClip, individual_id: str, sex: Sex | str, age: Age | str,
                 expected_rate: int | None = DEFAULT_SAMPLE_RATE) -> list[AudioSegment]:
    """Cut ``clip`` into consecutive, non-overlapping 1 s windows.

    The trailing remainder shorter than one second is dropped.
    """
    if expected_rate is not None and clip.sample_rate != expected_rate:
        raise SampleRateMismatch(
            f"clip sampled at {clip.sample_rate} Hz, expected {expected_rate} Hz")
    sr = clip.sample_rate
    sex, age = Sex.parse(sex), Age.parse(age)
    n = len(clip.samples) // sr
    return [AudioSegment(clip.samples[i * sr:(i + 1) * sr], sr, individual_id, sex, age, i * sr)
            for i in range(n)]


# ----------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ManifestEntry:
    path: str
    individual_id: str
    sex: Sex
    age: Age


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    sample_rate_expected: int = DEFAULT_SAMPLE_RATE
    root: Path = field(default=Path("."))

    def __post_init__(self):
        seen_paths = set()
        owner: dict[str, tuple[Sex, Age]] = {}
        for e in self.entries:
            if e.path in seen_paths:
                raise ManifestError(f"duplicate path {e.path!r}")
            seen_paths.add(e.path)
            group = (e.sex, e.age)
            if owner.setdefault(e.individual_id, group) != group:
                raise ManifestError(
                    f"individual {e.individual_id!r} appears in more than one (sex, age) group")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def load_segments(self) -> list[AudioSegment]:
        segments: list[AudioSegment] = []
        for e in self.entries:
            clip = read_wav(self.resolve(e))
            segments.extend(segment_clip(clip, e.individual_id, e.sex, e.age,
                                         self.sample_rate_expected))
        return segments


MANIFEST_HEADER = ["path", "individual_id", "sex", "age"]


def parse_manifest(text: str, root: str | Path = ".",
                   sample_rate_expected: int = DEFAULT_SAMPLE_RATE) -> DatasetManifest:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != MANIFEST_HEADER:
        raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
    entries = []
    for lineno, row in enumerate(reader, start=2):
        try:
            entries.append(ManifestEntry(row["path"].strip(), row["individual_id"].strip(),
                                         Sex.parse(row["sex"]), Age.parse(row["age"])))
        except (ValueError, AttributeError) as exc:
            raise ManifestError(f"line {lineno}: {exc}") from None
    return DatasetManifest(tuple(entries), sample_rate_expected, Path(root))


def load_manifest(path: str | Path, sample_rate_expected: int = DEFAULT_SAMPLE_RATE) -> DatasetManifest:
    path = Path(path)
    return parse_manifest(path.read_text(), path.parent, sample_rate_expected)


def format_manifest(entries: Iterable[ManifestEntry]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for e in entries:
        w.writerow([e.path, e.individual_id, e.sex.value, e.age.value])
    return out.getvalue()


# ---------------------------------------------------------------- synthetic

@dataclass(frozen=True)
class ClassProfile:
    """Generator settings for one (sex, age) class.

    ``kind`` is ``"buzz"`` (harmonic carapace-vibration tone bursts) or
    ``"click"`` (trains of broadband damped transients).  ``burst_rate`` is the
    expected number of bursts per second, ``noise_floor`` the RMS of the
    white background noise.
    """
    name: str
    sex: Sex
    age: Age
    kind: str = "buzz"
    center_hz: float = 150.0
    bandwidth_hz: float = 20.0
    burst_rate: float = 2.0
    noise_floor: float = 0.003
    amplitude: float = 0.3
    individual_spread: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "sex", Sex.parse(self.sex))
        object.__setattr__(self, "age", Age.parse(self.age))
        if self.kind not in ("buzz", "click"):
            raise ValueError(f"profile {self.name!r}: kind must be 'buzz' or 'click'")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"profile {self.name!r}: bandwidth must be positive")
        if self.center_hz <= 0:
            raise ValueError(f"profile {self.name!r}: center frequency must be positive")
        if self.burst_rate < 0 or self.noise_floor < 0 or self.amplitude < 0:
            raise ValueError(f"profile {self.name!r}: rates and levels must be non-negative")


def default_profiles() -> list[ClassProfile]:
    """Adults buzz, juveniles click; males sit lower in frequency than females."""
    return [
        ClassProfile("adult_male", Sex.MALE, Age.ADULT, "buzz", 150.0, 20.0),
        ClassProfile("adult_female", Sex.FEMALE, Age.ADULT, "buzz", 230.0, 25.0),
        ClassProfile("juvenile_male", Sex.MALE, Age.JUVENILE, "click", 2000.0, 1200.0),
        ClassProfile("juvenile_female", Sex.FEMALE, Age.JUVENILE, "click", 4000.0, 1800.0),
    ]


def _buzz_burst(rng: np.random.Generator, f0: float, bandwidth: float, sr: int) -> np.ndarray:
    dur = rng.uniform(0.15, 0.3)
    t = np.arange(int(dur * sr)) / sr
    f = f0 + rng.normal(0.0, bandwidth / 4)
    vib = 1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(4, 8) * t)
    phase = 2 * np.pi * np.cumsum(f * vib) / sr
    wave = np.sin(phase) + 0.5 * np.sin(2 * phase + rng.uniform(0, np.pi)) \
        + 0.25 * np.sin(3 * phase + rng.uniform(0, np.pi))
    return wave * np.hanning(len(t)) / 1.2


def _click_burst(rng: np.random.Generator, fc: float, bandwidth: float, sr: int) -> np.ndarray:
    dur = rng.uniform(0.08, 0.2)
    out = np.zeros(int(dur * sr) + sr // 100)
    n_clicks = rng.integers(4, 12)
    tau = 1.0 / (np.pi * bandwidth)
    tc = np.arange(int(8 * tau * sr) + 2) / sr
    for start in np.sort(rng.integers(0, int(dur * sr), n_clicks)):
        f = rng.uniform(fc - bandwidth / 2, fc + bandwidth / 2)
        click = np.exp(-tc / tau) * np.sin(2 * np.pi * f * tc + rng.uniform(0, 2 * np.pi))
        stop = min(len(out), start + len(click))
        out[start:stop] += click[:stop - start] * rng.uniform(0.5, 1.0)
    return out


def _render_segment(rng: np.random.Generator, profile: ClassProfile, individual: dict, sr: int) -> np.ndarray:
    x = rng.normal(0.0, profile.noise_floor, sr) if profile.noise_floor > 0 else np.zeros(sr)
    n_bursts = rng.poisson(profile.burst_rate) if profile.burst_rate > 0 else 0
    for _ in range(n_bursts):
        if profile.kind == "buzz":
            burst = _buzz_burst(rng, individual["center"], profile.bandwidth_hz, sr)
        else:
            burst = _click_burst(rng, individual["center"], profile.bandwidth_hz, sr)
        gain = profile.amplitude * individual["gain"] * rng.lognormal(0.0, 0.25)
        start = rng.integers(0, sr)
        stop = min(sr, start + len(burst))
        x[start:stop] += gain * burst[:stop - start]
    return np.clip(x, -1.0, 1.0)


def generate_synthetic_dataset(profiles: Sequence[ClassProfile], n_per_class: int, seed: int,
                               sample_rate: int = DEFAULT_SAMPLE_RATE,
                               individuals_per_class: int = REFERENCE_INDIVIDUALS_PER_GROUP) -> list[AudioSegment]:
    """Generate ``n_per_class`` labelled 1 s segments for every profile.

    Segments are dealt round-robin to ``individuals_per_class`` synthetic
    individuals per profile; each individual carries its own frequency
    offset and gain so that group-level splitting matters.  Output is a pure
    function of ``(profiles, n_per_class, seed, sample_rate, individuals_per_class)``.
    """
    if len(profiles) < 2:
        raise ValueError("need at least two class profiles")
    if n_per_class <= 0:
        raise ValueError("n_per_class must be positive")
    if individuals_per_class <= 0:
        raise ValueError("individuals_per_class must be positive")
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise ValueError("profile names must be unique")

    root = np.random.SeedSequence(seed)
    segments = []
    for p_idx, (profile, ss) in enumerate(zip(profiles, root.spawn(len(profiles)))):
        ind_ss, seg_ss = ss.spawn(2)
        ind_rng = np.random.default_rng(ind_ss)
        individuals = []
        for i in range(individuals_per_class):
            individuals.append({
                "id": f"{profile.name}-{i + 1:02d}",
                "center": profile.center_hz * (1.0 + profile.individual_spread * ind_rng.uniform(-1, 1)),
                "gain": ind_rng.uniform(0.7, 1.3),
            })
        for j, child in enumerate(seg_ss.spawn(n_per_class)):
            ind = individuals[j % individuals_per_class]
            x = _render_segment(np.random.default_rng(child), profile, ind, sample_rate)
            segments.append(AudioSegment(x, sample_rate, ind["id"], profile.sex, profile.age, 0))
    return segments


SYNTH_KEYS = {"seed", "n_per_class", "individuals_per_class", "sample_rate", "codec", "profiles"}
PROFILE_KEYS = {"name", "sex", "age", "kind", "center_hz", "bandwidth_hz", "burst_rate",
                "noise_floor", "amplitude", "individual_spread"}


def profiles_from_config(items: Sequence[dict]) -> list[ClassProfile]:
    out = []
    for i, item in enumerate(items):
        unknown = set(item) - PROFILE_KEYS
        if unknown:
            raise KeyError(f"profiles[{i}]: unknown key(s) {', '.join(sorted(unknown))}")
        missing = {"name", "sex", "age"} - set(item)
        if missing:
            raise KeyError(f"profiles[{i}]: missing key(s) {', '.join(sorted(missing))}")
        out.append(ClassProfile(**item))
    return out


def profile_to_config(p: ClassProfile) -> dict:
    return {"name": p.name, "sex": p.sex.value, "age": p.age.value, "kind": p.kind,
            "center_hz": p.center_hz, "bandwidth_hz": p.bandwidth_hz, "burst_rate": p.burst_rate,
            "noise_floor": p.noise_floor, "amplitude": p.amplitude,
            "individual_spread": p.individual_spread}


def write_synthetic_dataset(segments: Sequence[AudioSegment], out_dir: str | Path,
                            codec: str = "pcm16") -> Path:
    """Write one WAV per individual (its segments concatenated) plus ``manifest.csv``."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    by_ind: dict[str, list[AudioSegment]] = {}
    for s in segments:
        by_ind.setdefault(s.individual_id, []).append(s)
    entries = []
    for ind in sorted(by_ind):
        segs = by_ind[ind]
        rel = f"audio/{ind}.wav"
        data = encode_wav(np.concatenate([s.samples for s in segs]), segs[0].sample_rate, codec)
        tmp = out_dir / (rel + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(out_dir / rel)
        entries.append(ManifestEntry(rel, ind, segs[0].sex, segs[0].age))
    manifest = out_dir / "manifest.csv"
    tmp = manifest.with_suffix(".csv.tmp")
    tmp.write_text(format_manifest(entries))
    tmp.replace(manifest)
    return manifest
