import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import blobs
from lobster_acoustics.learners import (BinaryClassifier, ConvergenceError, DecisionTreeClassifier,
                                        GaussianNB, GradientBoostingClassifier, KNNClassifier,
                                        LogisticRegression, MLPClassifier, ModelPipeline,
                                        NotFittedError, RandomForestClassifier, SVMClassifier,
                                        expand_grid, grid_search, make_pipeline, preset)
from lobster_acoustics.learners.knn import k_smallest, minkowski_distances
from lobster_acoustics.learners.logreg import logreg_objective
from lobster_acoustics.learners.mlp import mlp_loss_grad
from lobster_acoustics.learners.svm import rbf_kernel, smo_solve
from lobster_acoustics.learners.trees import best_gini_split, tree_apply
from gradcheck import central_diff, rel_err
from oracles import best_split_exhaustive, gini


# ---------------------------------------------------------------- protocol

@pytest.mark.parametrize("model", [
    KNNClassifier(3), GaussianNB(), SVMClassifier(C=10), RandomForestClassifier(5, seed=1),
    GradientBoostingClassifier(10, seed=1), MLPClassifier(8, max_epochs=20, seed=1),
    LogisticRegression(l2_strength=1e-2),
])
def test_probabilities_and_immutability(model):
    X, y = blobs(60, 3)
    model.fit(X, y)
    P = model.predict_proba(X)
    assert np.all((P >= 0) & (P <= 1))
    assert np.max(np.abs(P.sum(axis=1) - 1)) < 1e-9
    with pytest.raises(RuntimeError):
        model.fit(X, y)
    arrays = [v for v in model.state_.values() if isinstance(v, np.ndarray)]
    assert all(not a.flags.writeable for a in arrays)
    for mode in ("decimal", "base64"):
        back = BinaryClassifier.from_json(model.to_json(arrays=mode))
        np.testing.assert_array_equal(back.predict_proba(X), P)
    a = model.clone().fit(X, y)
    np.testing.assert_array_equal(a.predict_proba(X), P)


def test_unfitted_and_bad_labels():
    with pytest.raises(NotFittedError):
        KNNClassifier().predict(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        KNNClassifier(1).fit(np.zeros((3, 2)), [0, 1, 2])
    with pytest.raises(ValueError):
        BinaryClassifier.from_json(json.dumps({"version": 99}))


# --------------------------------------------------------------------- KNN

def test_knn_self_neighbour():
    X, y = blobs(20)
    m = KNNClassifier(1).fit(X, y)
    np.testing.assert_array_equal(m.predict_proba(X)[np.arange(20), y], 1.0)


def test_knn_toy_votes_vs_brute_force():
    X = np.array([[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]], float)
    y = np.array([0, 0, 1, 1, 1, 0])
    Q = np.array([[0.2, 0.2], [5.5, 5.2], [3, 3]])
    m = KNNClassifier(3, p=2).fit(X, y)
    for q, p in zip(Q, m.predict_proba(Q)[:, 1]):
        d = [math.dist(q, x) for x in X]
        near = sorted(range(6), key=lambda i: (d[i], i))[:3]
        assert p == pytest.approx(sum(y[i] for i in near) / 3)


def test_knn_errors_and_preset():
    with pytest.raises(ValueError):
        KNNClassifier(5).fit(np.zeros((3, 2)), [0, 1, 0])
    assert preset("knn", 40) == {"k": 5, "p": 1, "weight": "uniform", "algorithm": "auto"}
    with pytest.raises(ValueError):
        KNNClassifier(weight="cosine")


def test_knn_distance_tie_uses_row_index():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([1, 0, 0, 1])
    idx, _ = KNNClassifier(2).fit(X, y).neighbors(np.array([[0.0]]))
    assert list(idx[0]) == [0, 1]


@given(seed=st.integers(0, 2 ** 20), p=st.sampled_from([1, 2, 3, np.inf]))
def test_minkowski_against_norm(seed, p):
    r = np.random.default_rng(seed)
    A, B = r.standard_normal((7, 4)), r.standard_normal((9, 4))
    ref = np.array([[np.linalg.norm(a - b, ord=p) for b in B] for a in A])
    np.testing.assert_allclose(minkowski_distances(A, B, p), ref, rtol=1e-10, atol=1e-12)


@given(seed=st.integers(0, 2 ** 20), k=st.integers(1, 12))
def test_k_smallest_matches_stable_argsort(seed, k):
    r = np.random.default_rng(seed)
    D = r.integers(0, 4, (6, 12)).astype(float)  # heavy ties
    np.testing.assert_array_equal(k_smallest(D, k), np.argsort(D, axis=1, kind="stable")[:, :k])


@given(seed=st.integers(0, 2 ** 20), scale=st.floats(0.01, 100), p=st.sampled_from([1, 2]))
def test_knn_scale_invariance(seed, scale, p):
    X, y = blobs(30, 3, seed=seed)
    Q = np.random.default_rng(seed + 1).standard_normal((10, 3))
    a = KNNClassifier(5, p=p).fit(X, y).predict(Q)
    b = KNNClassifier(5, p=p).fit(X * scale, y).predict(Q * scale)
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------- NB

def test_nb_hand_posterior():
    X = np.array([[0.0], [2.0], [4.0], [6.0]])
    y = np.array([0, 0, 1, 1])
    m = GaussianNB().fit(X, y)
    v = 1.0 + 1e-9 * 5.0  # class variance + smoothing * max feature variance

    def post(x):
        l0 = 0.5 * math.exp(-(x - 1) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
        l1 = 0.5 * math.exp(-(x - 5) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
        return l1 / (l0 + l1)

    xs = np.array([[1.0], [2.0], [3.0], [3.5]])
    np.testing.assert_allclose(m.predict_proba(xs)[:, 1], [post(x) for x in xs[:, 0]], atol=1e-12)
    assert m.predict_proba(np.array([[3.0]]))[0, 1] == pytest.approx(0.5, abs=1e-12)


def test_nb_midpoint_boundary(rng):
    a = rng.normal(-4, 1, 500)
    x = np.concatenate([a, 6.0 - a])  # mirror image about 3: equal variances, means symmetric
    y = np.repeat([0, 1], 500)
    m = GaussianNB().fit(x[:, None], y)
    p = m.predict_proba(np.array([[2.999], [3.0], [3.001]]))[:, 1]
    assert p[1] == pytest.approx(0.5, abs=1e-12)
    assert p[0] < 0.5 < p[2]


def test_nb_singleton_class():
    with pytest.raises(ValueError):
        GaussianNB().fit(np.array([[0.0], [1.0], [2.0]]), [0, 0, 1])


# --------------------------------------------------------------------- SVM

def test_svm_two_points_midpoint():
    m = SVMClassifier(C=10, gamma=0.5, platt_folds=1).fit(np.array([[-1.0], [1.0]]), [0, 1])
    assert abs(m.decision_function(np.array([[0.0]]))[0]) < 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_svm_separable_kkt(seed):
    X, y = blobs(60, 2, sep=8.0, seed=seed)
    m = SVMClassifier(C=10, gamma="scale").fit(X, y)
    assert np.mean(m.predict(X) == y) == 1.0
    assert np.all(m.kkt_audit(X, y) < 1e-3)


def test_svm_gamma_rules(rng):
    X = rng.standard_normal((30, 4)) * 3
    y = np.arange(30) % 2
    assert SVMClassifier(gamma="auto").fit(X, y).state_["gamma"] == pytest.approx(0.25)
    assert SVMClassifier(gamma="scale").fit(X, y).state_["gamma"] == pytest.approx(1 / (4 * X.var()))
    with pytest.raises(ValueError):
        SVMClassifier(gamma="wide")


def test_svm_convergence_error_carries_iterate():
    X, y = blobs(40, 2, sep=0.5)
    K = rbf_kernel(X, X, 1.0)
    with pytest.raises(ConvergenceError) as exc:
        smo_solve(K, np.where(y == 1, 1.0, -1.0), 100.0, 1e-3, max_iter=3)
    assert exc.value.state["alpha"].shape == (40,)


def test_svm_dual_feasibility(rng):
    X, y = blobs(50, 3, sep=1.0, seed=3)
    ys = np.where(y == 1, 1.0, -1.0)
    alpha, b, _ = smo_solve(rbf_kernel(X, X, 0.5), ys, 1.0)
    assert np.all((alpha >= 0) & (alpha <= 1.0))
    assert abs(alpha @ ys) < 1e-9


# ------------------------------------------------------------------- trees

def test_single_split_threshold():
    X = np.array([[0.0], [1.0], [2.0], [7.0], [8.0]])
    y = np.array([0, 0, 0, 1, 1])
    t = DecisionTreeClassifier(max_depth=1).fit(X, y)
    thr = t.state_["tree"]["threshold"][0]
    assert 2.0 < thr < 7.0
    np.testing.assert_array_equal(t.predict(X), y)


@pytest.mark.parametrize("seed", range(8))
def test_gini_split_matches_exhaustive(seed):
    r = np.random.default_rng(seed)
    X = np.round(r.standard_normal((25, 3)), 1)
    y = (X[:, 0] + 0.5 * r.standard_normal(25) > 0).astype(int)
    f, thr, gain = best_gini_split(X, y, np.arange(3))
    g_best, j, t = best_split_exhaustive(X, y)
    parent = gini(np.bincount(y, minlength=2))
    assert gain == pytest.approx(parent - g_best, abs=1e-12)
    assert (f, thr) == (j, pytest.approx(t))


@pytest.mark.parametrize("seed", range(5))
def test_tree_splits_beat_random_thresholds(seed):
    r = np.random.default_rng(seed)
    X = r.standard_normal((80, 4))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0.5)).astype(int)
    tree = DecisionTreeClassifier(max_depth=4).fit(X, y).state_["tree"]
    leaves_of = tree_apply(tree, X)
    # walk nodes and recover the row set of each internal node
    members = {0: np.arange(80)}
    for node in range(len(tree["feature"])):
        if tree["feature"][node] == -1 or node not in members:
            continue
        idx = members[node]
        f, thr = tree["feature"][node], tree["threshold"][node]
        left = X[idx, f] <= thr
        members[tree["left"][node]] = idx[left]
        members[tree["right"][node]] = idx[~left]
        yn = y[idx]
        chosen = (left.sum() * gini(np.bincount(yn[left], minlength=2))
                  + (~left).sum() * gini(np.bincount(yn[~left], minlength=2))) / len(idx)
        lo, hi = X[idx, f].min(), X[idx, f].max()
        for t in r.uniform(lo, hi, 100):
            L = X[idx, f] <= t
            alt = (L.sum() * gini(np.bincount(yn[L], minlength=2))
                   + (~L).sum() * gini(np.bincount(yn[~L], minlength=2))) / len(idx)
            assert chosen <= alt + 1e-12
    assert len(np.unique(leaves_of)) > 1


def test_forest_single_tree_reduces_to_cart(rng):
    X, y = blobs(50, 3, sep=1.0)
    rf = RandomForestClassifier(1, max_features=None, bootstrap=False).fit(X, y)
    cart = DecisionTreeClassifier().fit(X, y)
    np.testing.assert_array_equal(rf.predict_proba(X), cart.predict_proba(X))


def test_forest_seeded():
    X, y = blobs(60, 4, sep=1.0)
    a = RandomForestClassifier(10, seed=3).fit(X, y).predict_proba(X)
    b = RandomForestClassifier(10, seed=3).fit(X, y).predict_proba(X)
    c = RandomForestClassifier(10, seed=4).fit(X, y).predict_proba(X)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_tree_param_errors():
    for kw in (dict(max_depth=0), dict(min_samples_split=1), dict(min_samples_leaf=0)):
        with pytest.raises(ValueError):
            DecisionTreeClassifier(**kw)
    with pytest.raises(ValueError):
        RandomForestClassifier(0)


# --------------------------------------------------------------------- GBT

def test_gbt_single_stump():
    X = np.array([[0.0], [1.0], [2.0], [5.0], [6.0]])
    y = np.array([0, 0, 0, 1, 1])
    m = GradientBoostingClassifier(1, learning_rate=1.0, max_depth=1, newton=False).fit(X, y)
    assert np.all(m.predict(X) == y)


@pytest.mark.parametrize("newton", [True, False])
@pytest.mark.parametrize("seed", range(3))
def test_gbt_loss_monotone(newton, seed):
    X, y = blobs(120, 4, sep=1.0, seed=seed)
    m = GradientBoostingClassifier(50, 0.1, 3, newton=newton, seed=seed).fit(X, y)
    trace = m.state_["loss_trace"]
    assert len(trace) == 51
    assert np.all(np.diff(trace) <= 1e-12)


def test_gbt_errors():
    with pytest.raises(ValueError):
        GradientBoostingClassifier(learning_rate=0)
    with pytest.raises(ValueError):
        GradientBoostingClassifier(subsample=1.5)
    with pytest.raises(ValueError):
        GradientBoostingClassifier(5).fit(np.zeros((4, 1)), [1, 1, 1, 1])


# --------------------------------------------------------------------- MLP

def _mlp_params(r, d, h):
    return [r.standard_normal((d, h)), r.standard_normal(h), r.standard_normal((h, 1)), r.standard_normal(1)]


def test_mlp_zero_network_loss():
    X, y = blobs(10, 3)
    params = [np.zeros((3, 4)), np.zeros(4), np.zeros((4, 1)), np.zeros(1)]
    loss, _ = mlp_loss_grad(params, X, y.astype(float), 0.01, "tanh")
    assert abs(loss - math.log(2)) < 1e-9


@given(seed=st.integers(0, 2 ** 20), d=st.integers(1, 5), h=st.integers(1, 6),
       act=st.sampled_from(["tanh", "relu"]), alpha=st.sampled_from([0.0, 1e-3, 0.1]))
def test_mlp_gradient_property(seed, d, h, act, alpha):
    r = np.random.default_rng(seed)
    X = r.standard_normal((5, d))
    y = (r.random(5) > 0.5).astype(float)
    params = _mlp_params(r, d, h)
    if act == "relu":
        # the finite-difference probe must not straddle the kink at 0
        z1 = X @ params[0] + params[1]
        if np.min(np.abs(z1)) < 1e-3:
            return
    _, grads = mlp_loss_grad(params, X, y, alpha, act)
    num = central_diff(lambda p: mlp_loss_grad(p, X, y, alpha, act)[0], params)
    for g, n in zip(grads, num):
        assert rel_err(g, n) < 1e-5 or np.max(np.abs(g - n)) < 1e-9


def test_mlp_learns_and_rejects_bad_hp():
    X, y = blobs(200, 2, sep=4.0)
    m = MLPClassifier(16, "tanh", max_epochs=200, learning_rate=1e-2, seed=0).fit(X, y)
    assert np.mean(m.predict(X) == y) > 0.95
    with pytest.raises(ValueError):
        MLPClassifier(0)
    with pytest.raises(ValueError):
        MLPClassifier(solver="sgd")


# ----------------------------------------------------------------- LogReg

@given(seed=st.integers(0, 2 ** 20), d=st.integers(1, 6), l2=st.sampled_from([0.0, 1e-3, 1.0]))
def test_logreg_gradient_property(seed, d, l2):
    r = np.random.default_rng(seed)
    X = r.standard_normal((8, d))
    y = (r.random(8) > 0.5).astype(float)
    w, b = r.standard_normal(d), np.array([r.standard_normal()])
    _, gw, gb = logreg_objective(w, b[0], X, y, l2)
    num = central_diff(lambda p: logreg_objective(p[0], p[1][0], X, y, l2)[0], [w, b])
    assert rel_err(gw, num[0]) < 1e-5 or np.max(np.abs(gw - num[0])) < 1e-9
    assert abs(gb - num[1][0]) < 1e-7


def test_logreg_informative_feature_and_stationarity():
    y = np.arange(40) % 2
    X = y[:, None].astype(float)
    m = LogisticRegression(l2_strength=1e-4).fit(X, y)
    assert np.all(m.predict(X) == y)
    assert m.gradient_norm(X, y) < 1e-8


def test_logreg_constant_features_give_prior():
    y = np.array([1, 0, 0, 0, 1, 0, 0, 0])
    m = LogisticRegression(l2_strength=1.0).fit(np.ones((8, 2)), y)
    np.testing.assert_allclose(m.predict_proba(np.ones((1, 2)))[0, 1], 0.25, atol=1e-8)


def test_logreg_cv_picks_from_grid():
    X, y = blobs(80, 3, sep=2.0)
    m = LogisticRegression().fit(X, y)
    assert m.state_["l2"] in m.l2_grid
    assert m.gradient_norm(X, y) < 1e-8


# ------------------------------------------------- pipelines / grid search

def test_pipeline_round_trip_and_rotation():
    X, y = blobs(60, 6, sep=2.0)
    pipe = make_pipeline("mlp", {"hidden": 8, "max_epochs": 5}, seed=1).fit(X, y)
    assert pipe.tev == pytest.approx(1.0)
    back = ModelPipeline.from_json(pipe.to_json())
    np.testing.assert_array_equal(back.predict_proba(X), pipe.predict_proba(X))
    knn = make_pipeline("knn", {"k": 3}).fit(X, y)
    assert knn.pca.n_components == 6  # preset 40 clamped to d


def test_expand_grid():
    assert expand_grid({}) == [{}]
    assert expand_grid({"a": [1, 2], "b": ["x"]}) == [{"a": 1, "b": "x"}, {"a": 2, "b": "x"}]
    with pytest.raises(ValueError):
        expand_grid({"a": []})


def test_grid_search_single_and_recomputed():
    X, y = blobs(60, 3, sep=1.5)
    one = grid_search("knn", {"k": [3]}, X, y, folds=3)
    assert one.best_params == {"k": 3}
    res = grid_search("knn", {"k": [1, 3, 5, 7], "p": [1, 2]}, X, y, folds=3, seed=2)
    from lobster_acoustics.learners.logreg import _stratified_folds
    fold = _stratified_folds(y, 3, 2)
    scores = []
    for params in expand_grid({"k": [1, 3, 5, 7], "p": [1, 2]}):
        accs = [np.mean(make_pipeline("knn", params, seed=2).fit(X[fold != f], y[fold != f])
                        .predict(X[fold == f]) == y[fold == f]) for f in range(3)]
        scores.append(np.mean(accs))
    assert res.best_score == pytest.approx(max(scores))
    assert [r["mean_accuracy"] for r in res.table] == pytest.approx(scores)
    with pytest.raises(ValueError):
        grid_search("knn", {"k": [3]}, X, y, folds=40)
