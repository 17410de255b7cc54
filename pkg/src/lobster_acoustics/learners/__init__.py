"""Classical classifiers written against numpy, plus pipelines and grid search."""

from .base import (BinaryClassifier, ConvergenceError, NotFittedError, TrainingError,
                   decode_array, encode_array, registry)
from .gbt import GradientBoostingClassifier
from .knn import KNNClassifier
from .logreg import LogisticRegression
from .mlp import MLPClassifier
from .nb import GaussianNB
from .pipeline import (CLASSICAL_FAMILIES, PRESET_COMPONENTS, PRESETS, ModelPipeline,
                       make_model, make_pipeline, preset)
from .search import GridResult, expand_grid, grid_search
from .svm import SVMClassifier
from .trees import DecisionTreeClassifier, RandomForestClassifier

__all__ = [
    "BinaryClassifier", "ConvergenceError", "NotFittedError", "TrainingError", "registry",
    "encode_array", "decode_array", "GradientBoostingClassifier", "KNNClassifier",
    "LogisticRegression", "MLPClassifier", "GaussianNB", "SVMClassifier",
    "DecisionTreeClassifier", "RandomForestClassifier", "ModelPipeline", "make_model",
    "make_pipeline", "preset", "PRESETS", "PRESET_COMPONENTS", "CLASSICAL_FAMILIES",
    "GridResult", "expand_grid", "grid_search",
]
