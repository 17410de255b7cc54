import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(n=60, d=2, sep=3.0, seed=0):
    """Two Gaussian blobs, labels 0/1, roughly balanced."""
    r = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = r.standard_normal((n, d)) + sep * y[:, None] * np.ones(d) / np.sqrt(d)
    return X, y


@pytest.fixture(scope="session")
def synth_features():
    """SNR-screened 40-MFCC features of a small synthetic dataset."""
    from dataclasses import replace

    from lobster_acoustics.dsp import PreprocessChain, snr_screen
    from lobster_acoustics.features import MfccConfig, extract_features
    from lobster_acoustics.ingest import default_profiles, generate_synthetic_dataset

    segs = generate_synthetic_dataset(default_profiles(), 40, 3, individuals_per_class=4)
    chain = PreprocessChain.build(22050)
    kept, _, _ = snr_screen([replace(s, samples=chain(s.samples)) for s in segs])
    return extract_features(kept, MfccConfig(n_mfcc=40))


# ------------------------------------------------- acceptance verdict lines

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    if failed or n not in _VERDICTS:
        _VERDICTS[n] = ("FAIL" if failed else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        verdict, title = _VERDICTS[n]
        terminalreporter.write_line(f"CRITERION {n:>2} {verdict}  {title}")
