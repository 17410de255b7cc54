"""Individual-level train/test splitting and grouped stratified K-fold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SplitError(ValueError):
    pass


def _groups_and_strata(data, strata=None):
    """Accept a FeatureMatrix, a list of segments, or explicit (groups, strata) arrays."""
    if strata is not None:
        return np.asarray(data, dtype=object), np.asarray(strata, dtype=object)
    if hasattr(data, "groups") and hasattr(data, "labels"):
        return np.asarray(data.groups, dtype=object), np.asarray(data.labels, dtype=object)
    groups = [s.individual_id for s in data]
    labels = [s.label for s in data]
    return np.asarray(groups, dtype=object), np.asarray(labels, dtype=object)


def group_strata(groups, strata) -> dict:
    """Map each individual to its stratum; an individual spanning two strata is an error."""
    owner = {}
    for g, s in zip(groups, strata):
        if owner.setdefault(g, s) != s:
            raise SplitError(f"individual {g!r} belongs to more than one stratum")
    return owner


@dataclass(frozen=True)
class SplitPlan:
    train_groups: frozenset
    test_groups: frozenset
    seed: int
    test_fraction: float = 0.2
    stratification: str = "sex x age"

    def __post_init__(self):
        overlap = self.train_groups & self.test_groups
        if overlap:
            raise SplitError(f"individuals on both sides of the split: {sorted(overlap)}")

    @property
    def fractions(self):
        return (1.0 - self.test_fraction, self.test_fraction)

    def masks(self, groups):
        groups = np.asarray(groups, dtype=object)
        test = np.array([g in self.test_groups for g in groups], dtype=bool)
        train = np.array([g in self.train_groups for g in groups], dtype=bool)
        return train, test

    def to_dict(self) -> dict:
        return {"train_groups": sorted(self.train_groups), "test_groups": sorted(self.test_groups),
                "seed": self.seed, "fractions": list(self.fractions),
                "stratification": self.stratification}


def n_test_individuals(n: int, test_fraction: float = 0.2) -> int:
    """round(fraction * n), at least one, leaving at least one for training."""
    k = max(1, int(math.floor(test_fraction * n + 0.5)))
    return min(k, n - 1)


def group_stratified_split(data, strata=None, test_fraction: float = 0.2, seed: int = 0) -> SplitPlan:
    """Assign whole individuals to train or test, separately within every stratum."""
    groups, labels = _groups_and_strata(data, strata)
    owner = group_strata(groups, labels)
    rng = np.random.default_rng(seed)
    train, test = set(), set()
    for stratum in sorted(set(owner.values())):
        members = sorted(g for g, s in owner.items() if s == stratum)
        if len(members) < 2:
            raise SplitError(f"stratum {stratum!r} has {len(members)} individual(s); need >= 2")
        order = rng.permutation(len(members))
        k = n_test_individuals(len(members), test_fraction)
        test.update(members[i] for i in order[:k])
        train.update(members[i] for i in order[k:])
    return SplitPlan(frozenset(train), frozenset(test), seed, test_fraction)


def stratified_kfold(y, k: int, seed: int = 0, groups=None) -> np.ndarray:
    """Fold index per row.

    With ``groups`` whole groups are dealt to folds: the groups of each class
    are shuffled and assigned round-robin, continuing the rotation across
    classes so fold sizes stay within one group of each other per class.
    Without ``groups`` every row is its own group.
    """
    y = np.asarray(y)
    if k < 2:
        raise SplitError("need at least two folds")
    if groups is None:
        groups = np.arange(len(y))
    groups = np.asarray(groups, dtype=object)
    owner = group_strata(groups, y)
    rng = np.random.default_rng(seed)
    classes = sorted(set(owner.values()))
    counts = {c: sum(1 for v in owner.values() if v == c) for c in classes}
    if min(counts.values()) < k:
        raise SplitError(f"{k} folds exceed the smallest class ({min(counts.values())} groups)")
    fold_of = {}
    offset = 0
    for c in classes:
        members = sorted((g for g, v in owner.items() if v == c), key=str)
        for pos, i in enumerate(rng.permutation(len(members))):
            fold_of[members[i]] = (offset + pos) % k
        offset = (offset + len(members)) % k
    return np.array([fold_of[g] for g in groups], dtype=np.int64)


def assert_split_hygiene(train_groups, test_groups) -> None:
    overlap = set(train_groups) & set(test_groups)
    if overlap:
        raise SplitError(f"group leakage across split: {sorted(overlap)}")


def fold_overlaps(fold, groups) -> int:
    """Number of groups that appear in more than one fold (should be 0)."""
    seen = {}
    bad = set()
    for f, g in zip(fold, groups):
        if seen.setdefault(g, f) != f:
            bad.add(g)
    return len(bad)
