import numpy as np
import pytest

from mcrkit.dataset import Dataset


def random_dataset(rng, n, p1=1, p2=1, noise=1.0):
    X = rng.normal(size=(n, p1 + p2))
    beta = rng.normal(size=p1 + p2)
    y = X @ beta + noise * rng.normal(size=n)
    return Dataset(y, X[:, :p1], X[:, p1:])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy():
    """Two rows: y = [0, 1], X1 = [0, 1], no X2."""
    return Dataset([0.0, 1.0], [[0.0], [1.0]], np.zeros((2, 0)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
