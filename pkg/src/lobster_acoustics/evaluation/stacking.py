"""Out-of-fold stacking with an L2 logistic meta-learner, plus the simple
averaging / majority-vote baselines used in the ablation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..learners.base import BinaryClassifier, TrainingError, check_X
from ..learners.knn import KNNClassifier
from ..learners.logreg import LogisticRegression
from .metrics import confusion_and_rates
from .split import stratified_kfold

PROB_CLIP = 1e-6


class StackingError(TrainingError):
    """A base learner failed inside a fold; ``fold`` and ``learner`` say where."""

    def __init__(self, message, fold=None, learner=None, state=None):
        super().__init__(message, state)
        self.fold = fold
        self.learner = learner


@dataclass
class OofMatrix:
    """Out-of-fold class probabilities, ``values[:, b*C + c]`` = P(class c) from base b."""

    values: np.ndarray
    learners: list
    fold: np.ndarray
    k: int
    n_classes: int = 2

    def __post_init__(self):
        n, w = self.values.shape
        if w != len(self.learners) * self.n_classes:
            raise ValueError("OOF width must equal B * C")
        if len(self.fold) != n:
            raise ValueError("fold assignment must cover every row")

    def positive(self) -> np.ndarray:
        """P(class 1) per base learner, shape (N, B)."""
        return self.values[:, 1::self.n_classes]

    def check(self):
        """Every row carries probabilities from exactly one held-out fold."""
        if np.any(np.isnan(self.values)):
            raise ValueError("OOF matrix has unfilled rows")
        if np.any((self.values < 0) | (self.values > 1)):
            raise ValueError("OOF probabilities outside [0, 1]")
        if set(np.unique(self.fold)) != set(range(self.k)):
            raise ValueError("some fold produced no predictions")
        return self


def _name(base, i):
    model = getattr(base, "model", base)
    return getattr(base, "name", None) or getattr(model, "display_name", "") or f"base{i}"


def _fresh(base):
    return base.clone()


def fit_on_fold(base, X, y, train_mask):
    """Clone ``base`` and fit it on the rows of ``train_mask`` only."""
    return _fresh(base).fit(X[train_mask], y[train_mask])


def meta_features(p1) -> np.ndarray:
    p = np.clip(np.asarray(p1, dtype=np.float64), PROB_CLIP, 1.0 - PROB_CLIP)
    return np.log(p) - np.log1p(-p)


def build_oof(bases, X, y, folds) -> OofMatrix:
    folds = np.asarray(folds)
    k = int(folds.max()) + 1
    names = [_name(b, i) for i, b in enumerate(bases)]
    vals = np.full((len(X), 2 * len(bases)), np.nan)
    for f in range(k):
        held = folds == f
        for j, base in enumerate(bases):
            try:
                m = fit_on_fold(base, X, y, ~held)
                vals[held, 2 * j:2 * j + 2] = m.predict_proba(X[held])
            except Exception as exc:
                raise StackingError(f"base learner {names[j]!r} failed on fold {f} "
                                    f"({int((~held).sum())} train rows): {exc}",
                                    fold=f, learner=names[j]) from exc
    return OofMatrix(vals, names, folds, k).check()


@dataclass
class StackedModel:
    bases: list            # refitted on the full training set
    meta: LogisticRegression
    oof: OofMatrix
    seed: int = 0
    meta_l2: float = 1e-3
    extra: dict = field(default_factory=dict)

    def base_probabilities(self, X) -> np.ndarray:
        X = check_X(X)
        return np.column_stack([b.predict_proba(X)[:, 1] for b in self.bases])

    def predict_proba(self, X) -> np.ndarray:
        P = self.base_probabilities(X)
        return self.meta.predict_proba(meta_features(P))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)


def stack_fit(bases, X, y, k: int = 5, seed: int = 0, groups=None, meta_l2: float | None = 1e-3,
              folds=None) -> StackedModel:
    """Stacked generalization.

    ``bases`` are unfitted estimators exposing ``clone``/``fit``/``predict_proba``
    (a :class:`ModelPipeline` carries its own scaler and PCA, so those are fit
    inside each fold too).  Folds are stratified on ``y`` and, when ``groups``
    is given, keep every group inside one fold.  ``meta_l2=None`` lets the
    meta-learner pick its own penalty by inner CV.
    """
    if len(bases) < 1:
        raise ValueError("need at least one base learner")
    X = check_X(X)
    y = np.asarray(y, dtype=np.int64)
    if folds is None:
        folds = stratified_kfold(y, k, seed, groups)
    oof = build_oof(bases, X, y, folds)
    meta = LogisticRegression(l2_strength=meta_l2, seed=seed).fit(meta_features(oof.positive()), y)
    full = []
    for i, b in enumerate(bases):
        try:
            full.append(_fresh(b).fit(X, y))
        except Exception as exc:
            raise StackingError(f"base learner {_name(b, i)!r} failed on the full refit: {exc}",
                                learner=_name(b, i)) from exc
    return StackedModel(full, meta, oof, seed, meta_l2)


# ----------------------------------------------------------------- ablation

def average_predict(P) -> np.ndarray:
    return (np.asarray(P).mean(axis=1) > 0.5).astype(np.int64)


def majority_predict(P) -> np.ndarray:
    """Hard vote of the bases; an even split falls back to the mean probability."""
    P = np.asarray(P)
    votes = (P > 0.5).sum(axis=1)
    B = P.shape[1]
    out = (2 * votes > B).astype(np.int64)
    tie = 2 * votes == B
    out[tie] = average_predict(P[tie])
    return out


def ablation_rows(stacked: StackedModel, X_test, y_test) -> list[dict]:
    """Test accuracy of each base, mean-average, majority vote and the stack."""
    y_test = np.asarray(y_test, dtype=np.int64)
    P = stacked.base_probabilities(X_test)
    rows = []
    for j, name in enumerate(stacked.oof.learners):
        rows.append({"combiner": f"base:{name}",
                     "accuracy": confusion_and_rates(y_test, (P[:, j] > 0.5).astype(int)).accuracy})
    for label, pred in (("average", average_predict(P)), ("majority", majority_predict(P)),
                        ("stacked", stacked.predict(X_test))):
        rows.append({"combiner": label, "accuracy": confusion_and_rates(y_test, pred).accuracy})
    return rows


# ---------------------------------------------------- scenario and witness

class FeatureSubset:
    """Wraps an estimator so it only sees the listed columns."""

    def __init__(self, model, columns, name=None):
        self.model = model
        self.columns = list(columns)
        self.name = name

    def clone(self):
        return FeatureSubset(self.model.clone(), self.columns, self.name)

    def fit(self, X, y):
        self.model.fit(np.asarray(X)[:, self.columns], y)
        return self

    def predict_proba(self, X):
        return self.model.predict_proba(np.asarray(X)[:, self.columns])


def complementary_scenario(n_train: int = 600, n_test: int = 2000, d_half: int = 2,
                           shifts=(0.7, 0.5), seed: int = 0):
    """Two feature blocks that are conditionally independent given the label.

    Each block alone gives a weak classifier.  The left base is a calibrated
    logistic regression; the right one is a 3-NN whose coarse votes (multiples of 1/3) are
    overconfident, so an equal-weight average over-trusts it while a fitted
    meta-learner can discount it.  Returns ``(X_tr, y_tr, X_te, y_te, bases)``.
    """
    rng = np.random.default_rng(seed)

    def draw(n):
        y = rng.integers(0, 2, n)
        shift = np.repeat(np.asarray(shifts, dtype=np.float64), d_half)
        X = rng.standard_normal((n, 2 * d_half)) + (2 * y - 1)[:, None] * shift
        return X, y

    Xtr, ytr = draw(n_train)
    Xte, yte = draw(n_test)
    bases = [FeatureSubset(LogisticRegression(l2_strength=1e-3), range(d_half), "left"),
             FeatureSubset(KNNClassifier(k=3), range(d_half, 2 * d_half), "right")]
    return Xtr, ytr, Xte, yte, bases


class SpyLearner(BinaryClassifier):
    """Records a fingerprint of the exact training matrix it was given."""

    display_name = "Spy"  # no family: kept out of the model registry

    def __init__(self):
        pass

    def _fit(self, X, y):
        digest = hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()
        return {"digest": digest, "n_rows": len(X), "prior": float(y.mean())}

    def _proba1(self, X):
        return np.full(len(X), self.state_["prior"])


def oof_leak_witness(base, X, y, folds) -> list[bool]:
    """For every fold, fit on the training folds twice: once as-is and once
    with the held-out rows' features zeroed.  A leak-free procedure yields
    identical fitted state; returns one bool (unchanged) per fold."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    folds = np.asarray(folds)
    result = []
    for f in range(int(folds.max()) + 1):
        held = folds == f
        Xz = X.copy()
        Xz[held] = 0.0
        a = fit_on_fold(base, X, y, ~held)
        b = fit_on_fold(base, Xz, y, ~held)
        result.append(_same_state(a, b))
    return result


def _same_state(a, b) -> bool:
    sa, sb = getattr(a, "state_", None), getattr(b, "state_", None)
    if sa is None or sb is None:
        return a.to_json() == b.to_json()
    if sa.keys() != sb.keys():
        return False
    for k in sa:
        va, vb = sa[k], sb[k]
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            if not np.array_equal(np.asarray(va), np.asarray(vb)):
                return False
        elif va != vb:
            return False
    return True
