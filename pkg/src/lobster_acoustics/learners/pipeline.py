"""Per-learner preprocessing pipelines (z-score -> PCA -> model) and the
tuned per-dimension presets."""

from __future__ import annotations

import copy
import json

import numpy as np

from ..dsp import Scaler, zscore_fit
from ..features import PcaModel, pca_fit
from .base import MODEL_VERSION, BinaryClassifier, registry
from .gbt import GradientBoostingClassifier
from .knn import KNNClassifier
from .logreg import LogisticRegression
from .mlp import MLPClassifier
from .nb import GaussianNB
from .svm import SVMClassifier
from .trees import RandomForestClassifier

CLASSICAL_FAMILIES = ("knn", "svm", "rf", "gbt", "nb", "mlp")

# Best grid rows per MFCC dimension, keyed by family.  "n_components" is the
# PCA size applied after z-scoring ("full" = rotation only, TEV 1).
PRESETS = {
    "knn": {40: {"k": 5, "p": 1, "weight": "uniform", "algorithm": "auto"},
            50: {"k": 7, "p": 2, "weight": "uniform", "algorithm": "auto"},
            60: {"k": 9, "p": 1, "weight": "uniform", "algorithm": "auto"}},
    "svm": {40: {"C": 10.0, "gamma": "auto", "kernel": "rbf"},
            50: {"C": 10.0, "gamma": "scale", "kernel": "rbf"},
            60: {"C": 1.0, "gamma": "auto", "kernel": "rbf"}},
    "rf": {40: {"max_depth": None, "min_samples_leaf": 1, "min_samples_split": 2, "n_estimators": 200},
           50: {"max_depth": 20, "min_samples_leaf": 3, "min_samples_split": 2, "n_estimators": 200},
           60: {"max_depth": None, "min_samples_leaf": 1, "min_samples_split": 10, "n_estimators": 200}},
    "gbt": {40: {"colsample_bytree": 0.7, "learning_rate": 0.1, "max_depth": 5, "n_estimators": 300,
                 "subsample": 0.7},
            50: {"colsample_bytree": 0.9, "learning_rate": 0.2, "max_depth": 4, "n_estimators": 300,
                 "subsample": 0.8},
            60: {"colsample_bytree": 0.9, "learning_rate": 0.1, "max_depth": 4, "n_estimators": 300,
                 "subsample": 0.9}},
    "nb": {40: {}, 50: {}, 60: {}},
    "mlp": {40: {"activation": "tanh", "hidden_units": 128, "lr_policy": "constant", "solver": "adam",
                 "alpha": 0.001},
            50: {"activation": "relu", "hidden_units": 64, "lr_policy": "constant", "solver": "adam",
                 "alpha": 0.01},
            60: {"activation": "relu", "hidden_units": 64, "lr_policy": "constant", "solver": "adam",
                 "alpha": 0.0001}},
}

PRESET_COMPONENTS = {"knn": 40, "svm": 30, "rf": 30, "gbt": 30, "nb": 30, "mlp": "full", "cnn": None}

# alternative spellings accepted in grids and configs
PARAM_ALIASES = {"n_neighbors": "k", "hidden": "hidden_units", "hidden_layer_sizes": "hidden_units",
                 "weights": "weight"}


def canonical_params(params: dict) -> dict:
    return {PARAM_ALIASES.get(k, k): v for k, v in params.items()}


def preset(family: str, mfcc_dim: int) -> dict:
    """Tuned hyperparameters for ``family`` at ``mfcc_dim`` (nearest tuned dim if absent)."""
    table = PRESETS[family]
    dim = min(table, key=lambda d: (abs(d - mfcc_dim), d))
    return dict(table[dim])


def make_model(family: str, params: dict | None = None, seed: int = 0) -> BinaryClassifier:
    klass = registry()[family]
    params = canonical_params(params or {})
    if "seed" in klass.__init__.__code__.co_varnames and "seed" not in params:
        params["seed"] = seed
    return klass(**params)


class ModelPipeline:
    """``z-score -> PCA(n_components) -> model``, all fitted on training rows only.

    ``n_components`` may be an int (clamped to the feature count), ``"full"``
    for a pure rotation, or ``None`` to skip PCA.
    """

    def __init__(self, model: BinaryClassifier, n_components=None, standardize: bool = True):
        self.model = model
        self.n_components = n_components
        self.standardize = standardize
        self.scaler: Scaler | None = None
        self.pca: PcaModel | None = None

    @property
    def family(self):
        return self.model.family

    def clone(self) -> "ModelPipeline":
        return ModelPipeline(self.model.clone(), self.n_components, self.standardize)

    def _k(self, n, d):
        if self.n_components is None:
            return None
        k = d if self.n_components == "full" else int(self.n_components)
        return max(1, min(k, d, n - 1))

    def fit(self, X, y) -> "ModelPipeline":
        X = np.asarray(X, dtype=np.float64)
        Z = X
        if self.standardize:
            self.scaler = zscore_fit(Z)
            Z = self.scaler.transform(Z)
        k = self._k(*X.shape)
        if k is not None:
            self.pca = pca_fit(Z, k)
            Z = self.pca.transform(Z)
        self.model.fit(Z, y)
        return self

    def transform(self, X) -> np.ndarray:
        Z = np.asarray(X, dtype=np.float64)
        if self.scaler is not None:
            Z = self.scaler.transform(Z)
        if self.pca is not None:
            Z = self.pca.transform(Z)
        return Z

    def predict_proba(self, X) -> np.ndarray:
        return self.model.predict_proba(self.transform(X))

    def predict(self, X) -> np.ndarray:
        return self.model.predict(self.transform(X))

    def decision_function(self, X) -> np.ndarray:
        return self.model.decision_function(self.transform(X))

    def inference_cost(self) -> float:
        return self.model.inference_cost()

    @property
    def tev(self) -> float:
        return 1.0 if self.pca is None else self.pca.tev

    def describe(self) -> dict:
        return {"family": self.family, "hyperparams": self.model.get_params(),
                "n_components": self.n_components, "standardize": self.standardize}

    def to_json(self, arrays: str = "decimal", seed=None) -> str:
        pre = {"scaler": json.loads(self.scaler.to_json()) if self.scaler else None,
               "pca": json.loads(self.pca.to_json()) if self.pca else None,
               "n_components": self.n_components, "standardize": self.standardize}
        return self.model.to_json(arrays, seed=seed, preprocessing=pre)

    @classmethod
    def from_json(cls, text: str) -> "ModelPipeline":
        d = json.loads(text)
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        pre = d.get("preprocessing") or {}
        pipe = cls(BinaryClassifier.from_dict(d), pre.get("n_components"), pre.get("standardize", True))
        if pre.get("scaler"):
            pipe.scaler = Scaler.from_json(json.dumps(pre["scaler"]))
        if pre.get("pca"):
            pipe.pca = PcaModel.from_json(json.dumps(pre["pca"]))
        return pipe


def make_pipeline(family: str, params: dict | None = None, n_components="preset",
                  seed: int = 0) -> ModelPipeline:
    params = copy.deepcopy(params or {})
    if "n_components" in params:
        n_components = params.pop("n_components")
    if n_components == "preset":
        n_components = PRESET_COMPONENTS.get(family)
    return ModelPipeline(make_model(family, params, seed), n_components)


__all__ = ["ModelPipeline", "make_pipeline", "make_model", "preset", "PRESETS",
           "PRESET_COMPONENTS", "CLASSICAL_FAMILIES", "GaussianNB", "KNNClassifier",
           "SVMClassifier", "RandomForestClassifier", "GradientBoostingClassifier",
           "MLPClassifier", "LogisticRegression"]
