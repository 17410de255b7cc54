import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lobster_acoustics.dsp import (PreprocessChain, Scaler, SnrPolicy, apply_filter, design_filter,
                                   rms_db, snr_screen, zscore_apply, zscore_fit)

SR = 22050


def db(h):
    return 20 * np.log10(np.abs(h))


def direct_response(stages, f, sr):
    # evaluate each biquad polynomial ratio by hand at z = e^{jw}
    w = 2 * np.pi * f / sr
    h = 1.0 + 0j
    for b0, b1, b2, a1, a2 in stages:
        num = b0 + b1 * np.exp(-1j * w) + b2 * np.exp(-2j * w)
        den = 1 + a1 * np.exp(-1j * w) + a2 * np.exp(-2j * w)
        h *= num / den
    return h


def test_bandpass_corners_and_midband():
    bp = design_filter("bandpass", (50, 8000), 4, SR)
    assert len(bp.stages) == 2
    for f in (50.0, 8000.0):
        assert -3.5 <= db(direct_response(bp.stages, f, SR)) <= -2.5
    assert db(direct_response(bp.stages, np.sqrt(50 * 8000), SR)) >= -0.1
    assert bp.is_stable()


@pytest.mark.parametrize("order", [2, 4, 8])
@pytest.mark.parametrize("fc", [20.0, 35.0, 50.0])
def test_highpass_corner_and_dc(order, fc):
    hp = design_filter("highpass", fc, order, SR)
    assert abs(direct_response(hp.stages, 0.0, SR)) < 1e-12
    assert -3.5 <= db(direct_response(hp.stages, fc, SR)) <= -2.5
    assert hp.is_stable()


def test_response_matches_scipy_freqz():
    from scipy.signal import sosfreqz
    bp = design_filter("bandpass", (50, 8000), 8, SR)
    f = np.array([10.0, 50.0, 300.0, 5000.0, 8000.0, 10000.0])
    _, h = sosfreqz(bp.sos(), worN=f, fs=SR)
    np.testing.assert_allclose(bp.response(f), h, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("kind, corners, order", [
    ("highpass", 11025, 2), ("highpass", 30, 3), ("bandpass", (50, 12000), 4),
    ("bandpass", (800, 50), 4), ("lowpass", 100, 2), ("highpass", 0, 2),
])
def test_design_errors(kind, corners, order):
    with pytest.raises(ValueError):
        design_filter(kind, corners, order, SR)


@pytest.mark.parametrize("kind, corners", [("highpass", 35.0), ("bandpass", (50.0, 8000.0))])
@pytest.mark.parametrize("order", [2, 4, 8])
def test_impulse_tail_energy(kind, corners, order):
    f = design_filter(kind, corners, order, SR)
    imp = np.zeros(11 * SR)
    imp[0] = 1.0
    h = apply_filter(f, imp)
    total = np.sum(h ** 2)
    assert np.sum(h[10 * SR:] ** 2) < 1e-9 * total


def test_apply_filter_trivial_cases(rng):
    bp = design_filter("bandpass", (50, 8000), 4, SR)
    assert not apply_filter(bp, np.zeros(1000)).any()
    x = rng.standard_normal(4000)
    y = apply_filter(bp, x)
    assert y.shape == x.shape
    assert np.max(np.abs(apply_filter(bp, 2 * x) - 2 * y)) < 1e-9
    with pytest.raises(ValueError):
        apply_filter(bp, x, sample_rate=16000)


def test_low_sine_rejected():
    bp = design_filter("bandpass", (50, 8000), 4, SR)
    t = np.arange(SR) / SR
    x = np.sin(2 * np.pi * 10 * t)
    y = apply_filter(bp, x)
    settle = int(0.2 * SR)
    rms = lambda v: np.sqrt(np.mean(v ** 2))
    assert rms(y[settle:]) < 0.05 * rms(x[settle:])


def test_chain_bounds():
    with pytest.raises(ValueError):
        PreprocessChain.build(SR, highpass_hz=60)
    chain = PreprocessChain.build(SR)
    assert chain.describe()["highpass"]["corners_hz"] == [35.0]


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2 ** 16))
def test_filter_linearity(a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, 512))
    chain = PreprocessChain.build(SR)
    lhs = chain(a * x + b * y)
    rhs = a * chain(x) + b * chain(y)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_time_invariance(rng):
    bp = design_filter("bandpass", (50, 8000), 4, SR)
    x = rng.standard_normal(600)
    shifted = np.concatenate([np.zeros(37), x])
    np.testing.assert_allclose(apply_filter(bp, shifted)[37:], apply_filter(bp, x), atol=1e-12)


# ---------------------------------------------------------------- SNR screen

def test_snr_noise_vs_buzz(rng):
    noise = [10 ** (-40 / 20) * np.sign(rng.standard_normal(2000)) for _ in range(100)]
    buzz = [10 ** (-20 / 20) * np.sign(rng.standard_normal(2000)) for _ in range(10)]
    segs = noise[:50] + buzz + noise[50:]
    kept, dropped, floor = snr_screen(segs, SnrPolicy(6.0, 10.0))
    assert floor == pytest.approx(-40.0, abs=1e-9)
    assert len(kept) == 10 and all(k is b for k, b in zip(kept, buzz))
    assert len(dropped) == 100


def test_snr_constant_rms():
    segs = [np.full(100, 0.1)] * 20
    kept, dropped, _ = snr_screen(segs)
    assert kept == [] and len(dropped) == 20
    kept, _, _ = snr_screen(segs, SnrPolicy(threshold_db=0.0))
    assert len(kept) == 20


def test_snr_errors():
    with pytest.raises(ValueError):
        snr_screen([])
    for p in (0, 100):
        with pytest.raises(ValueError):
            SnrPolicy(percentile=p)


@given(levels=st.lists(st.floats(-80, 0), min_size=2, max_size=40),
       thr=st.floats(0, 20), p=st.floats(1, 99))
def test_snr_idempotent_and_ordered(levels, thr, p):
    segs = [np.full(8, 10 ** (lv / 20)) for lv in levels]
    pol = SnrPolicy(thr, p)
    kept, dropped, floor = snr_screen(segs, pol)
    again, gone, _ = snr_screen(kept, pol, floor_db=floor) if kept else ([], [], floor)
    assert len(again) == len(kept) and not gone
    ids = [id(s) for s in segs]
    assert [ids.index(id(s)) for s in kept] == sorted(ids.index(id(s)) for s in kept)
    assert len(kept) + len(dropped) == len(segs)


def test_rms_db():
    assert rms_db(np.full(10, 0.1)) == pytest.approx(-20.0)


# ------------------------------------------------------------------ z-score

def test_zscore_hand_values():
    sc = zscore_fit(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]))
    Z = zscore_apply(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), sc)
    np.testing.assert_allclose(Z[:, 0], [-1.2247448714, 0.0, 1.2247448714], atol=1e-9)
    assert not Z[:, 1].any()
    assert sc.std[0] == pytest.approx(np.sqrt(2 / 3))


def test_zscore_errors():
    with pytest.raises(ValueError):
        zscore_fit(np.ones((1, 3)))
    sc = zscore_fit(np.eye(3))
    with pytest.raises(ValueError):
        sc.transform(np.ones((2, 4)))


def test_scaler_json_round_trip(rng):
    sc = zscore_fit(rng.standard_normal((10, 4)))
    back = Scaler.from_json(sc.to_json())
    np.testing.assert_array_equal(back.mean, sc.mean)
    np.testing.assert_array_equal(back.std, sc.std)
    with pytest.raises(ValueError):
        Scaler.from_json('{"version": 9}')


@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)),
              elements=st.floats(-1e3, 1e3)))
def test_zscore_properties(X):
    sc = zscore_fit(X)
    Z = sc.transform(X)
    ok = ~sc.constant
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(Z[:, ok].std(axis=0) - 1) < 1e-9)
    assert not Z[:, ~ok].any()
    np.testing.assert_allclose(sc.inverse_transform(Z)[:, ok], X[:, ok], atol=1e-9 * (1 + np.abs(X).max()))
