"""Acceptance suite.  Each test carries a ``criterion`` mark; the terminal
summary prints one PASS/FAIL line per criterion."""
import csv
import json
import time

import numpy as np
import pytest

from gradcheck import central_diff, fd_check, rel_err
from lobster_acoustics.cli import main
from lobster_acoustics.evaluation import (ablation_rows, benjamini_hochberg, complementary_scenario,
                                          confusion_and_rates, group_stratified_split, mcnemar,
                                          oof_leak_witness, reproduce_all, roc_auc, stack_fit,
                                          stratified_kfold, SpyLearner)
from lobster_acoustics.features import MfccConfig, mfcc
from lobster_acoustics.learners import (GradientBoostingClassifier, RandomForestClassifier,
                                        SVMClassifier)
from lobster_acoustics.learners.logreg import logreg_objective
from lobster_acoustics.learners.mlp import mlp_loss_grad
from lobster_acoustics.neural import CnnSpec, ConvBlock, dcnn_dilation_schedule, init_params
from oracles import auc_pairs, best_split_exhaustive, gini, naive_dct2_ortho, naive_mfcc, naive_triangles

criterion = pytest.mark.criterion

EXPECTED_AVG = {
    "ml_avj": {"MLP": "2.17", "SVM": "2.33", "KNN": "3.00", "XGBoost": "3.50", "RF": "4.83", "NB": "5.17"},
    "ml_mf": {"SVM": "2.17", "MLP": "2.33", "KNN": "2.50", "XGBoost": "3.67", "RF": "5.00", "NB": "5.33"},
}


# ----------------------------------------------------------------- 1 ranks

@criterion(1, "rank tables reproduce exactly from the metric fixtures")
def test_c1_rank_tables():
    t0 = time.perf_counter()
    assert main(["reproduce-ranks"]) == 0
    elapsed = time.perf_counter() - t0
    out = reproduce_all()
    assert set(out) == {"ml_avj", "ml_mf", "dl_avj", "dl_mf"}
    for name, (rows, mism) in out.items():
        assert not mism, [str(m) for m in mism]
    for name, want in EXPECTED_AVG.items():
        got = {r.model: f"{r.avg_rank:.2f}" for r in out[name][0]}
        assert got == want
    assert elapsed < 1.0


# ------------------------------------------------------------------ 2 MFCC

def _random_segment(r, sr):
    t = np.arange(sr) / sr
    kind = r.integers(4)
    if kind == 0:
        return r.uniform(-1, 1, sr)
    if kind == 1:
        return r.uniform(1e-4, 1) * r.standard_normal(sr)
    if kind == 2:
        f = r.uniform(60, 4000, 3)
        return sum(r.uniform(0.05, 0.5) * np.sin(2 * np.pi * fi * t + r.uniform(0, 6)) for fi in f)
    # pulsed buzz with decaying bursts
    f0 = r.uniform(80, 250)
    env = np.exp(-((t * r.uniform(5, 20)) % 1.0) * 8)
    return env * np.sin(2 * np.pi * f0 * t) + 0.01 * r.standard_normal(sr)


@criterion(2, "MFCC chain equals the naive reference on 100 random 1 s segments")
def test_c2_mfcc_oracle():
    cfg = MfccConfig()
    W = naive_triangles(cfg.n_mels, cfg.fmin, cfg.fmax, cfg.n_fft, cfg.sample_rate)
    D = naive_dct2_ortho(cfg.n_mels)
    r = np.random.default_rng(2024)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        x = _random_segment(r, cfg.sample_rate)
        ref = naive_mfcc(x, W=W, D=D)
        worst = max(worst, float(np.max(np.abs(mfcc(x, cfg).frames - ref))))
    assert worst < 1e-6, worst
    assert time.perf_counter() - t0 < 30


# ------------------------------------------------------------- 3 gradients

def _cnn_specs():
    specs = []
    for n in range(1, 5):
        specs.append(tuple(ConvBlock(2, 3, 1, 1 if i else 2) for i in range(n)))
        specs.append(tuple(ConvBlock(2, 3, d, 1) for d in dcnn_dilation_schedule(n)))
    return specs


@criterion(3, "finite-difference gradient checks for MLP, logistic regression and 1-4 layer CNN/DCNN")
def test_c3_gradients():
    t0 = time.perf_counter()
    r = np.random.default_rng(33)
    for case in range(20):
        d, h = r.integers(1, 6), r.integers(1, 7)
        act = ("tanh", "relu")[case % 2]
        X = r.standard_normal((6, d))
        y = (r.random(6) > 0.5).astype(float)
        params = [r.standard_normal((d, h)), r.standard_normal(h), r.standard_normal((h, 1)),
                  r.standard_normal(1)]
        if act == "relu" and np.min(np.abs(X @ params[0] + params[1])) < 1e-3:
            continue
        alpha = float(r.choice([0.0, 1e-3, 0.1]))
        _, grads = mlp_loss_grad(params, X, y, alpha, act)
        num = central_diff(lambda p: mlp_loss_grad(p, X, y, alpha, act)[0], params)
        for g, n in zip(grads, num):
            assert rel_err(g, n) < 1e-4 or np.max(np.abs(g - n)) < 1e-9

        w, b = r.standard_normal(d), np.array([r.standard_normal()])
        _, gw, gb = logreg_objective(w, b[0], X, y, alpha)
        num = central_diff(lambda p: logreg_objective(p[0], p[1][0], X, y, alpha)[0], [w, b])
        assert rel_err(gw, num[0]) < 1e-4 or np.max(np.abs(gw - num[0])) < 1e-9
        assert rel_err(np.array([gb]), num[1]) < 1e-4 or abs(gb - num[1][0]) < 1e-9

    for blocks in _cnn_specs():
        spec = CnnSpec(blocks, dense_units=3)
        L = 40
        params = init_params(spec, L, r)
        params = [p + 0.1 * r.standard_normal(p.shape) for p in params]
        X = r.standard_normal((3, L))
        y = np.array([0.0, 1.0, 1.0])
        worst, used = fd_check(spec, params, X, y)
        assert used > 0.8 * sum(p.size for p in params), (blocks, used)
        assert worst < 1e-4, (blocks, worst)
    assert time.perf_counter() - t0 < 60


# ---------------------------------------------------------------- 4 solvers

def _node_rows(tree, X):
    members = {0: np.arange(len(X))}
    for node in range(len(tree["feature"])):
        if tree["feature"][node] == -1 or node not in members:
            continue
        idx = members[node]
        go_left = X[idx, tree["feature"][node]] <= tree["threshold"][node]
        members[tree["left"][node]] = idx[go_left]
        members[tree["right"][node]] = idx[~go_left]
        yield node, idx, go_left


@criterion(4, "SVM KKT audit, monotone GBT loss, RF splits match the exhaustive oracle")
def test_c4_solvers():
    r = np.random.default_rng(44)
    for i in range(20):
        n, d = 40, int(r.integers(2, 5))
        y = np.arange(n) % 2
        sep = 6.0 if i % 2 == 0 else 0.8  # separable / overlapping
        X = r.standard_normal((n, d)) + sep * y[:, None] / np.sqrt(d)
        m = SVMClassifier(C=float(r.choice([0.5, 1.0, 10.0])), gamma="scale", tol=1e-3).fit(X, y)
        assert np.all(m.kkt_audit(X, y) < 1e-3), i

    for seed in range(5):
        X = r.standard_normal((150, 4))
        y = (X[:, 0] + X[:, 1] ** 2 + 0.5 * r.standard_normal(150) > 1).astype(int)
        trace = GradientBoostingClassifier(60, 0.2, 3, subsample=1.0, seed=seed).fit(X, y).state_["loss_trace"]
        assert np.all(np.diff(trace) <= 1e-12)

    for seed in range(4):
        X = np.round(r.standard_normal((40, 3)), 1)
        y = ((X[:, 0] > 0) ^ (X[:, 2] > 0.3)).astype(int)
        rf = RandomForestClassifier(3, max_depth=3, max_features=None, bootstrap=False, seed=seed).fit(X, y)
        for tree in rf.state_["trees"]:
            checked = 0
            for node, idx, go_left in _node_rows(tree, X):
                yn = y[idx]
                chosen = (go_left.sum() * gini(np.bincount(yn[go_left], minlength=2))
                          + (~go_left).sum() * gini(np.bincount(yn[~go_left], minlength=2))) / len(idx)
                best, _, _ = best_split_exhaustive(X[idx], yn)
                assert chosen <= best + 1e-12
                checked += 1
            assert checked > 0


# ---------------------------------------------------------------- 5 metrics

@criterion(5, "AUC, confusion rates, McNemar and BH match their oracles")
def test_c5_metric_oracles():
    r = np.random.default_rng(55)
    for _ in range(200):
        n = int(r.integers(2, 120))
        y = r.integers(0, 2, n)
        y[:2] = [0, 1]
        s = np.round(r.random(n), int(r.integers(1, 4)))
        assert abs(roc_auc(y, s) / 100 - auc_pairs(s, y)) < 1e-12
    rates = confusion_and_rates([1, 1, 0, 0], [1, 0, 0, 0])
    assert (rates.accuracy, rates.precision, rates.recall) == (75.0, 100.0, 50.0)
    assert round(rates.f1, 2) == 66.67
    y = np.ones(10, int)
    b = y.copy()
    b[:6] = 0
    assert mcnemar(y, b, y).p_value == 0.03125
    np.testing.assert_allclose(benjamini_hochberg([0.01, 0.02, 0.03, 0.04]), [0.04] * 4, atol=1e-15)


# ---------------------------------------------------- 6, 9, 10 full pipeline

PIPELINE_CFG = """\
seed: 42
mfcc_dims: [40]
"""


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    cfg = root / "config.yaml"
    cfg.write_text(PIPELINE_CFG)
    dirs = []
    for sub in ("first", "second"):
        t0 = time.perf_counter()
        code = main(["run", "--config", str(cfg), "--out", str(root / sub), "--quiet"])
        assert code == 0
        (run_dir,) = (root / sub).iterdir()
        dirs.append((run_dir, time.perf_counter() - t0))
    return dirs


def _accuracies(run_dir, task):
    with open(run_dir / "metrics" / f"{task}_metrics.csv") as fh:
        return {row["model"]: float(row["accuracy"]) for row in csv.DictReader(fh)}


@criterion(6, "synthetic pipeline: every family >= 90% except NB >= 75%, both tasks")
def test_c6_end_to_end(pipeline_runs):
    run_dir, seconds = pipeline_runs[0]
    assert seconds < 600
    for task in ("age", "sex"):
        acc = _accuracies(run_dir, task)
        cnn = [m for m in acc if m.startswith("1D-")]
        assert {"KNN", "SVM", "RF", "XGBoost", "NB", "MLP"} <= set(acc) and cnn
        for model, a in acc.items():
            assert a >= (75.0 if model == "NB" else 90.0), (task, model, a)


@criterion(7, "stacking: leak-free OOF, stack beats every base and the average")
def test_c7_stacking():
    Xtr, ytr, Xte, yte, bases = complementary_scenario(seed=0)
    folds = stratified_kfold(ytr, 5, seed=0)
    assert all(oof_leak_witness(SpyLearner(), Xtr, ytr, folds))
    st = stack_fit(bases, Xtr, ytr, folds=folds, seed=0)
    rows = {r["combiner"]: r["accuracy"] for r in ablation_rows(st, Xte, yte)}
    assert {"average", "majority", "stacked"} <= set(rows)
    assert rows["stacked"] >= max(rows["base:left"], rows["base:right"])
    assert rows["stacked"] >= rows["average"]


@criterion(8, "10,000 split/fold draws without individual overlap")
def test_c8_split_hygiene():
    r = np.random.default_rng(88)
    strata_names = ["F-adult", "F-juvenile", "M-adult", "M-juvenile"]
    for draw in range(10_000):
        per = r.integers(2, 9, 4)
        groups, strata = [], []
        for s, k in zip(strata_names, per):
            for i in range(k):
                m = int(r.integers(1, 4))
                groups += [f"{s}-{i}"] * m
                strata += [s] * m
        groups = np.array(groups, dtype=object)
        if draw % 2 == 0:
            plan = group_stratified_split(groups, strata, test_fraction=float(r.uniform(0.1, 0.5)),
                                          seed=int(r.integers(2 ** 31)))
            assert not plan.train_groups & plan.test_groups
            for s in strata_names:
                assert any(g.startswith(s) for g in plan.test_groups)
                assert any(g.startswith(s) for g in plan.train_groups)
        else:
            y = np.array([s.endswith("adult") for s in strata], dtype=int)
            n_min = min(per[0] + per[2], per[1] + per[3])
            k = int(r.integers(2, n_min + 1))
            fold = stratified_kfold(y, k, seed=int(r.integers(2 ** 31)), groups=groups)
            for g in set(groups):
                assert len(set(fold[groups == g])) == 1
            for f in range(k):
                assert set(y[fold == f]) == {0, 1}


@criterion(9, "two identical runs give byte-identical metric CSVs")
def test_c9_determinism(pipeline_runs):
    (a, _), (b, _) = pipeline_runs
    for task in ("age", "sex"):
        pa, pb = a / "metrics" / f"{task}_metrics.csv", b / "metrics" / f"{task}_metrics.csv"
        assert pa.read_bytes() == pb.read_bytes()


@criterion(10, "KNN median inference time below every CNN variant")
def test_c10_timing_order(pipeline_runs):
    run_dir, _ = pipeline_runs[0]
    bench = json.loads((run_dir / "bench" / "timing.json").read_text())
    med = {r["model"]: r["median_ms"] for r in bench["reports"]}
    cnn = {m: v for m, v in med.items() if m.startswith("1D-")}
    assert len(cnn) == 8
    assert all(med["KNN"] < v for v in cnn.values()), (med["KNN"], cnn)
