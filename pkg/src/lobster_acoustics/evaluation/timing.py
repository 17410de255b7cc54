"""Per-sample inference latency: repeated whole-batch timing with order statistics."""

from __future__ import annotations

import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

# a repeat shorter than this many timer ticks is too coarse to trust
MIN_TICKS = 100


def environment() -> dict:
    cpu = platform.processor() or ""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return {"cpu": cpu or platform.machine(), "cores": os.cpu_count(),
            "python": platform.python_version(), "numpy": np.__version__,
            "platform": platform.platform()}


@dataclass
class TimingReport:
    model: str
    n_samples: int
    repeats: int
    warmup: int
    median_ms: float
    min_ms: float
    max_ms: float
    q1_ms: float
    q3_ms: float
    per_repeat_ms: list
    timer_resolution_s: float
    coarse_timer: bool
    env: dict = field(default_factory=dict)

    @property
    def iqr_ms(self) -> float:
        return self.q3_ms - self.q1_ms

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iqr_ms"] = self.iqr_ms
        return d


def _predict_fn(model):
    if callable(model) and not hasattr(model, "predict_proba"):
        return model
    return model.predict_proba


def measure_inference_time(model, X, warmup: int = 1, repeats: int = 30, name: str | None = None,
                           timer=time.perf_counter) -> TimingReport:
    """Per-sample latency in ms: each repeat times one prediction over all of
    ``X`` and divides by ``len(X)``.  ``model`` is anything with
    ``predict_proba`` or a plain callable."""
    if repeats < 5:
        raise ValueError("repeats must be >= 5")
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    X = np.asarray(X)
    n = len(X)
    if n == 0:
        raise ValueError("X is empty")
    fn = _predict_fn(model)
    for _ in range(warmup):
        fn(X)
    per = np.empty(repeats)
    for r in range(repeats):
        t0 = timer()
        fn(X)
        per[r] = timer() - t0
    res = time.get_clock_info("perf_counter").resolution if timer is time.perf_counter else 0.0
    coarse = bool(per.min() <= 0.0 or (res > 0 and per.min() < MIN_TICKS * res))
    ms = per * 1e3 / n
    q1, med, q3 = np.percentile(ms, [25, 50, 75])
    label = name or getattr(model, "name", None) or type(getattr(model, "model", model)).__name__
    return TimingReport(label, n, repeats, warmup, float(med), float(ms.min()), float(ms.max()),
                        float(q1), float(q3), [float(v) for v in ms], res, coarse, environment())


def timing_table(reports) -> list[dict]:
    return sorted(({"model": r.model, "median_ms": r.median_ms, "iqr_ms": r.iqr_ms,
                    "min_ms": r.min_ms, "coarse_timer": r.coarse_timer} for r in reports),
                  key=lambda d: (d["median_ms"], d["model"]))
