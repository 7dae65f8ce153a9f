import numpy as np
import pytest

from co3.config import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL = dict(n_scenes=3, steps=6, batch_scenes=2, n1=64, n2=64, d1=32, mlp1_hidden=32, mlp2_hidden=32)


@pytest.fixture
def small_cfg():
    return RunConfig(**SMALL)


@pytest.fixture(scope="session")
def small_scenes():
    from co3.training import prepare_scene, pretraining_scenes

    cfg = RunConfig(**SMALL)
    return [prepare_scene(p, cfg) for p in pretraining_scenes(cfg)]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
