import numpy as np
import pytest

from polspeckle.raster import C2Raster


def random_psd(rng, shape=(), scale=1.0):
    """Random PSD covariances with coherence magnitude below one."""
    c11 = rng.exponential(scale, shape)
    c22 = rng.exponential(scale, shape)
    coh = rng.uniform(0, 1, shape) * np.exp(1j * rng.uniform(-np.pi, np.pi, shape))
    return c11, c22, coh * np.sqrt(c11 * c22)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_c2(rng):
    return C2Raster(*random_psd(rng, (2, 3)))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
