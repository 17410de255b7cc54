"""CART trees: Gini classification trees, random forests, and the
gradient/hessian regression trees used by boosting.

Trees are stored as flat node arrays.  ``feature[i] == -1`` marks a leaf;
samples go left when ``x[feature] <= threshold``.  Split ties are resolved by
the lowest feature index and then the lowest threshold.
"""

from __future__ import annotations

import numpy as np

from .base import BinaryClassifier

LEAF = -1


def _sorted_columns(Xn, feats):
    V = Xn[:, feats]
    order = np.argsort(V, axis=0, kind="stable")
    return np.take_along_axis(V, order, axis=0), order


def best_gini_split(Xn, yn, feats, min_samples_leaf=1):
    """Best Gini split of one node over the candidate features.

    Returns ``(feature, threshold, gain)`` or ``None`` when no valid split exists.
    ``gain`` is parent impurity minus the size-weighted child impurity.
    """
    n = len(yn)
    if n < 2:
        return None
    feats = np.sort(np.asarray(feats))
    Vs, order = _sorted_columns(Xn, feats)
    ys = yn[order].astype(np.float64)
    cl = np.cumsum(ys, axis=0)[:-1]
    pos = cl[-1] + ys[-1]
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    cr = pos - cl
    child = (2 * cl * (nl - cl) / nl + 2 * cr * (nr - cr) / nr) / n
    valid = (Vs[1:] > Vs[:-1]) & (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    if not valid.any():
        return None
    child = np.where(valid, child, np.inf)
    # feature-major flattening: argmin picks lowest feature, then lowest threshold
    flat = int(np.argmin(child.T))
    f_idx, pos_idx = divmod(flat, n - 1)
    p = yn.mean()
    parent = 2 * p * (1 - p)
    thr = 0.5 * (Vs[pos_idx, f_idx] + Vs[pos_idx + 1, f_idx])
    return int(feats[f_idx]), float(thr), float(parent - child[pos_idx, f_idx])


def best_newton_split(Xn, g, h, feats, lam=1.0, min_child_weight=1.0, min_samples_leaf=1):
    """Best split under the second-order boosting gain
    ``1/2 [GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)]``."""
    n = len(g)
    if n < 2:
        return None
    feats = np.sort(np.asarray(feats))
    Vs, order = _sorted_columns(Xn, feats)
    GL = np.cumsum(g[order], axis=0)[:-1]
    HL = np.cumsum(h[order], axis=0)[:-1]
    G, H = g.sum(), h.sum()
    GR, HR = G - GL, H - HL
    nl = np.arange(1, n)[:, None]
    gain = 0.5 * (GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - G ** 2 / (H + lam))
    valid = ((Vs[1:] > Vs[:-1]) & (HL >= min_child_weight) & (HR >= min_child_weight)
             & (nl >= min_samples_leaf) & (n - nl >= min_samples_leaf))
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain.T))
    f_idx, pos_idx = divmod(flat, n - 1)
    best = gain[pos_idx, f_idx]
    if not best > 1e-12:
        return None
    thr = 0.5 * (Vs[pos_idx, f_idx] + Vs[pos_idx + 1, f_idx])
    return int(feats[f_idx]), float(thr), float(best)


class _TreeBuilder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_node, self.gain = [], [], []

    def add(self, value, n):
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.n_node.append(n)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def arrays(self):
        return {"feature": np.array(self.feature, dtype=np.int64),
                "threshold": np.array(self.threshold, dtype=np.float64),
                "left": np.array(self.left, dtype=np.int64),
                "right": np.array(self.right, dtype=np.int64),
                "value": np.array(self.value, dtype=np.float64),
                "n_node": np.array(self.n_node, dtype=np.int64),
                "gain": np.array(self.gain, dtype=np.float64)}


def _choose_features(d, max_features, rng):
    if max_features is None or max_features >= d:
        return np.arange(d), np.array([], dtype=np.int64)
    perm = rng.permutation(d)
    return perm[:max_features], perm[max_features:]


def build_classification_tree(X, y, max_depth=None, min_samples_split=2, min_samples_leaf=1,
                              max_features=None, rng=None):
    """Grow a Gini tree; leaf value = fraction of class 1 in the leaf."""
    d = X.shape[1]
    b = _TreeBuilder()
    root = b.add(float(y.mean()), len(y))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        if (len(idx) < min_samples_split or len(idx) < 2 * min_samples_leaf
                or (max_depth is not None and depth >= max_depth) or yn.min() == yn.max()):
            continue
        Xn = X[idx]
        feats, rest = _choose_features(d, max_features, rng)
        split = best_gini_split(Xn, yn, feats, min_samples_leaf)
        if split is None and len(rest):
            # like common CART implementations, keep looking past the sampled features
            split = best_gini_split(Xn, yn, rest, min_samples_leaf)
        if split is None:
            continue
        f, thr, gain = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        b.feature[node], b.threshold[node], b.gain[node] = f, thr, gain
        b.left[node] = b.add(float(y[li].mean()), len(li))
        b.right[node] = b.add(float(y[ri].mean()), len(ri))
        stack.append((b.right[node], ri, depth + 1))
        stack.append((b.left[node], li, depth + 1))
    return b.arrays()


def build_regression_tree(X, g, h, max_depth=3, lam=1.0, min_child_weight=1.0,
                          min_samples_leaf=1, features=None):
    """Grow a boosting tree with Newton leaf values ``-G / (H + lam)``."""
    feats = np.arange(X.shape[1]) if features is None else np.asarray(features)
    b = _TreeBuilder()
    root = b.add(float(-g.sum() / (h.sum() + lam)), len(g))
    stack = [(root, np.arange(len(g)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2:
            continue
        Xn = X[idx]
        split = best_newton_split(Xn, g[idx], h[idx], feats, lam, min_child_weight, min_samples_leaf)
        if split is None:
            continue
        f, thr, gain = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        b.feature[node], b.threshold[node], b.gain[node] = f, thr, gain
        b.left[node] = b.add(float(-g[li].sum() / (h[li].sum() + lam)), len(li))
        b.right[node] = b.add(float(-g[ri].sum() / (h[ri].sum() + lam)), len(ri))
        stack.append((b.right[node], ri, depth + 1))
        stack.append((b.left[node], li, depth + 1))
    return b.arrays()


def tree_apply(tree, X) -> np.ndarray:
    """Leaf index reached by every row of ``X``."""
    node = np.zeros(len(X), dtype=np.int64)
    feat = tree["feature"]
    rows = np.arange(len(X))
    active = feat[node] != LEAF
    while active.any():
        r = rows[active]
        n = node[r]
        go_left = X[r, feat[n]] <= tree["threshold"][n]
        node[r] = np.where(go_left, tree["left"][n], tree["right"][n])
        active[r] = feat[node[r]] != LEAF
    return node


def tree_predict(tree, X) -> np.ndarray:
    return tree["value"][tree_apply(tree, X)]


def tree_depth(tree) -> int:
    depth = np.zeros(len(tree["feature"]), dtype=np.int64)
    for i, f in enumerate(tree["feature"]):
        if f != LEAF:
            depth[tree["left"][i]] = depth[tree["right"][i]] = depth[i] + 1
    return int(depth.max())


def _resolve_max_features(max_features, d):
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    if max_features == "log2":
        return max(1, int(np.log2(d)))
    if isinstance(max_features, float):
        return max(1, int(max_features * d))
    return int(max_features)


def _check_tree_params(max_depth, min_samples_split, min_samples_leaf):
    if max_depth is not None and max_depth < 1:
        raise ValueError("max_depth must be >= 1 or None")
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be >= 1")


class DecisionTreeClassifier(BinaryClassifier):
    family = "cart"
    display_name = "CART"

    def __init__(self, max_depth: int | None = None, min_samples_split: int = 2,
                 min_samples_leaf: int = 1, max_features=None, seed: int = 0):
        _check_tree_params(max_depth, min_samples_split, min_samples_leaf)
        self.max_depth, self.min_samples_split = max_depth, min_samples_split
        self.min_samples_leaf, self.max_features, self.seed = min_samples_leaf, max_features, seed

    def _fit(self, X, y):
        rng = np.random.default_rng(self.seed)
        return {"tree": build_classification_tree(
            X, y, self.max_depth, self.min_samples_split, self.min_samples_leaf,
            _resolve_max_features(self.max_features, X.shape[1]), rng)}

    def _proba1(self, X):
        return tree_predict(self.state_["tree"], X)

    def inference_cost(self):
        return float(tree_depth(self.state_["tree"]) + 1)


class RandomForestClassifier(BinaryClassifier):
    family = "rf"
    display_name = "RF"

    def __init__(self, n_estimators: int = 100, max_depth: int | None = None,
                 min_samples_split: int = 2, min_samples_leaf: int = 1,
                 max_features="sqrt", bootstrap: bool = True, seed: int = 0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        _check_tree_params(max_depth, min_samples_split, min_samples_leaf)
        self.n_estimators, self.max_depth = n_estimators, max_depth
        self.min_samples_split, self.min_samples_leaf = min_samples_split, min_samples_leaf
        self.max_features, self.bootstrap, self.seed = max_features, bootstrap, seed

    def _fit(self, X, y):
        n, d = X.shape
        mtry = _resolve_max_features(self.max_features, d)
        trees = []
        for ss in np.random.SeedSequence(self.seed).spawn(self.n_estimators):
            rng = np.random.default_rng(ss)
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            trees.append(build_classification_tree(X[rows], y[rows], self.max_depth,
                                                   self.min_samples_split, self.min_samples_leaf,
                                                   mtry, rng))
        return {"trees": trees}

    def _proba1(self, X):
        return np.mean([tree_predict(t, X) for t in self.state_["trees"]], axis=0)

    def inference_cost(self):
        return float(sum(tree_depth(t) + 1 for t in self.state_["trees"]))
