"""Run configuration: defaults, file loading (YAML or JSON) and schema checks.

Precedence, lowest to highest: built-in defaults, the config file, then
command-line flags (``--seed``, ``--out``, ``--jobs``).
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from . import __version__

FAMILIES = ("knn", "svm", "rf", "gbt", "nb", "mlp", "cnn")
CNN_VARIANTS = tuple(f"1D-{kind} {n}L" for kind in ("CNN", "DCNN") for n in (1, 2, 3, 4))
TASKS = ("age", "sex")
POSITIVE_CHOICES = {"age": ("juvenile", "adult"), "sex": ("female", "male")}


class ConfigError(ValueError):
    pass


# Grids are small neighbourhoods around the tuned table rows; keys use the
# table column names.  Values not listed fall back to the per-dimension preset.
DEFAULT_GRIDS = {
    "knn": {"n_neighbors": [3, 5, 7, 9], "p": [1, 2], "weights": ["uniform"]},
    "svm": {"C": [1.0, 10.0], "gamma": ["auto", "scale"]},
    "rf": {"n_estimators": [100], "max_depth": [None, 20], "min_samples_leaf": [1, 3]},
    "gbt": {"n_estimators": [100], "learning_rate": [0.1, 0.2], "max_depth": [3, 5],
            "subsample": [0.8], "colsample_bytree": [0.9]},
    "nb": {"var_smoothing": [1e-9], "n_components": [5, 10, 15, 20, 30]},
    "mlp": {"hidden": [64, 128], "activation": ["relu", "tanh"], "alpha": [1e-4, 1e-3]},
}

DEFAULTS = {
    "seed": 42,
    "out": "runs",
    "jobs": 1,
    "tasks": ["age", "sex"],
    "positive_class": {"age": "juvenile", "sex": "female"},
    "mfcc_dims": [40, 50, 60],
    "dataset": {
        "source": "synthetic",
        "manifest": None,
        "sample_rate": 22050,
        "synthetic": {"seed": None, "n_per_class": 120, "individuals_per_class": 6,
                      "codec": "pcm16", "profiles": None},
    },
    "preprocessing": {
        "highpass_hz": 35.0, "highpass_order": 2,
        "band_hz": [50.0, 8000.0], "bandpass_order": 4,
        "snr_threshold_db": 6.0, "snr_percentile": 10.0,
    },
    "mfcc": {"n_fft": 2048, "hop": 512, "n_mels": 128, "fmin": 50.0, "fmax": 8000.0},
    "split": {"seed": None, "test_fraction": 0.2},
    "models": {
        "families": list(FAMILIES),
        "grid_search": True,
        "cv_folds": 5,
        "grids": copy.deepcopy(DEFAULT_GRIDS),
        "params": {},
        "n_components": {},
        "cnn_variants": list(CNN_VARIANTS),
        "cnn_epochs": None,
        "cnn_input": "mfcc",
        "serialize_arrays": "decimal",
    },
    "evaluation": {"record_timing": False, "n_boot": 2000, "bootstrap_top": 2},
    "stacking": {"enabled": True, "bases": ["rf", "gbt", "svm", "cnn"], "folds": 5,
                 "meta_l2": 1e-3, "mfcc_dim": None},
    "bench": {"repeats": 30, "warmup": 1, "mfcc_dim": None},
}

# keys whose values are free-form mappings (not checked against DEFAULTS)
_OPEN = {("models", "grids"), ("models", "params"), ("models", "n_components")}


def _check_keys(cfg, ref, path=()):
    for key, val in cfg.items():
        where = ".".join(path + (str(key),))
        if key not in ref:
            raise ConfigError(f"unknown config key: {where}")
        if path + (key,) in _OPEN:
            continue
        if isinstance(ref[key], dict) and ref[key] and not isinstance(val, dict):
            raise ConfigError(f"{where} must be a mapping")
        if isinstance(ref[key], dict) and ref[key]:
            _check_keys(val, ref[key], path + (key,))


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("grids", "params",
                                                                              "n_components"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: dict) -> dict:
    _require(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed must be a non-negative integer")
    _require(isinstance(cfg["jobs"], int) and cfg["jobs"] >= 1, "jobs must be a positive integer")
    tasks = cfg["tasks"]
    _require(isinstance(tasks, list) and tasks and set(tasks) <= set(TASKS),
             f"tasks must be a non-empty subset of {list(TASKS)}")
    for t, v in cfg["positive_class"].items():
        _require(t in TASKS, f"unknown config key: positive_class.{t}")
        _require(str(v).lower() in POSITIVE_CHOICES[t],
                 f"positive_class.{t} must be one of {list(POSITIVE_CHOICES[t])}")
    dims = cfg["mfcc_dims"]
    _require(isinstance(dims, list) and dims and all(isinstance(d, int) and 1 <= d <= 128 for d in dims),
             "mfcc_dims must be a non-empty list of integers in [1, 128]")
    _require(len(set(dims)) == len(dims), "mfcc_dims has duplicates")
    ds = cfg["dataset"]
    _require(ds["source"] in ("synthetic", "manifest"), "dataset.source must be 'synthetic' or 'manifest'")
    if ds["source"] == "manifest":
        _require(bool(ds["manifest"]), "dataset.manifest is required when dataset.source is 'manifest'")
    syn = ds["synthetic"]
    _require(isinstance(syn["n_per_class"], int) and syn["n_per_class"] > 0,
             "dataset.synthetic.n_per_class must be a positive integer")
    _require(isinstance(syn["individuals_per_class"], int) and syn["individuals_per_class"] >= 2,
             "dataset.synthetic.individuals_per_class must be >= 2")
    _require(syn["codec"] in ("pcm16", "float32"), "dataset.synthetic.codec must be pcm16 or float32")
    if syn["profiles"] is not None:
        from .ingest import profiles_from_config
        _require(isinstance(syn["profiles"], list) and len(syn["profiles"]) >= 2,
                 "dataset.synthetic.profiles must list at least two class profiles")
        try:
            profiles_from_config(syn["profiles"])
        except (KeyError, TypeError, ValueError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            raise ConfigError(f"dataset.synthetic.{msg}") from None
    pre = cfg["preprocessing"]
    _require(len(pre["band_hz"]) == 2 and 0 < pre["band_hz"][0] < pre["band_hz"][1],
             "preprocessing.band_hz must be [low, high] with 0 < low < high")
    _require(0 < pre["snr_percentile"] < 100, "preprocessing.snr_percentile must lie in (0, 100)")
    m = cfg["models"]
    fams = m["families"]
    _require(isinstance(fams, list) and fams and set(fams) <= set(FAMILIES),
             f"models.families must be a non-empty subset of {list(FAMILIES)}")
    for f in list(m["grids"]) + list(m["params"]) + list(m["n_components"]):
        _require(f in FAMILIES, f"unknown config key: models.*.{f}")
    for f, grid in m["grids"].items():
        _require(isinstance(grid, dict) and all(isinstance(v, list) and v for v in grid.values()),
                 f"models.grids.{f} must map parameter names to non-empty lists")
    _require(isinstance(m["cv_folds"], int) and m["cv_folds"] >= 2, "models.cv_folds must be >= 2")
    _require(set(m["cnn_variants"]) <= set(CNN_VARIANTS),
             f"models.cnn_variants must be drawn from {list(CNN_VARIANTS)}")
    _require(m["cnn_input"] in ("mfcc", "pca30"), "models.cnn_input must be 'mfcc' or 'pca30'")
    _require(m["serialize_arrays"] in ("decimal", "base64"), "models.serialize_arrays must be decimal or base64")
    ev = cfg["evaluation"]
    _require(ev["n_boot"] >= 100, "evaluation.n_boot must be >= 100")
    st = cfg["stacking"]
    _require(set(st["bases"]) <= set(FAMILIES) and len(st["bases"]) >= 2,
             "stacking.bases must name at least two model families")
    _require(st["folds"] >= 2, "stacking.folds must be >= 2")
    b = cfg["bench"]
    _require(b["repeats"] >= 5 and b["warmup"] >= 1, "bench needs repeats >= 5 and warmup >= 1")
    for key in ("stacking", "bench"):
        d = cfg[key]["mfcc_dim"]
        _require(d is None or d in dims, f"{key}.mfcc_dim must be one of mfcc_dims")
    return cfg


def build_config(file_cfg: dict | None = None, seed=None, out=None, jobs=None) -> dict:
    file_cfg = file_cfg or {}
    if not isinstance(file_cfg, dict):
        raise ConfigError("config file must contain a mapping at the top level")
    _check_keys(file_cfg, DEFAULTS)
    cfg = _merge(DEFAULTS, file_cfg)
    for key, val in (("seed", seed), ("out", out), ("jobs", jobs)):
        if val is not None:
            cfg[key] = val
    return validate(cfg)


def load_config(path=None, **flags) -> dict:
    data = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        try:
            data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from None
        data = data or {}
    return build_config(data, **flags)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def run_id(cfg: dict) -> str:
    """Content hash of everything that affects results.  Output location and
    the worker count do not."""
    core = {k: v for k, v in cfg.items() if k not in ("out", "jobs")}
    h = hashlib.sha256(canonical_json({"config": core, "version": __version__}).encode())
    return h.hexdigest()[:12]


def split_seed(cfg) -> int:
    s = cfg["split"]["seed"]
    return cfg["seed"] if s is None else int(s)


def synth_seed(cfg) -> int:
    s = cfg["dataset"]["synthetic"]["seed"]
    return cfg["seed"] if s is None else int(s)
