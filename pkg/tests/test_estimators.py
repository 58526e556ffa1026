import numpy as np
import pytest

from mcrkit.dataset import Dataset
from mcrkit.errors import TooLargeForOracle, ZeroDenominator
from mcrkit.estimators import (
    Estimator,
    FunctionModel,
    Hinge,
    RelianceMode,
    SquaredError,
    algorithm_reliance,
    divide_rows,
    e_divide,
    e_orig,
    e_switch,
    e_switch_all_perm_oracle,
    model_reliance,
)
from mcrkit.linear_class import LinearClass, LinearModel

from conftest import random_dataset

SQ = SquaredError()
half = LinearModel([0.5], [])


def ignores_x1(X1, X2):
    return np.sin(X2[:, 0]) + 0.3


def test_toy_values(toy):
    assert e_orig(half, SQ, toy) == 0.125
    assert e_switch(half, SQ, toy) == 0.625
    assert e_divide(half, SQ, toy) == 0.625
    assert e_switch_all_perm_oracle(half, SQ, toy) == 0.625


def test_constant_model_and_interpolator(toy):
    const = FunctionModel(lambda X1, X2: np.full(len(X1), 0.5))
    assert e_orig(const, SQ, toy) == 0.25
    assert e_orig(LinearModel([1.0], []), SQ, toy) == 0.0


def test_reliance_modes(toy):
    assert model_reliance(half, SQ, toy, RelianceMode.RATIO) == 5.0
    assert model_reliance(half, SQ, toy, RelianceMode.DIFFERENCE) == 0.5


def test_zero_denominator(toy):
    with pytest.raises(ZeroDenominator):
        model_reliance(LinearModel([1.0], []), SQ, toy)


def test_null_reliance_exact(rng):
    for n in (2, 3, 7, 40):
        d = random_dataset(rng, n, 2, 2)
        m = FunctionModel(ignores_x1)
        assert e_switch(m, SQ, d) == e_orig(m, SQ, d)
        assert model_reliance(m, SQ, d) == 1.0
        assert model_reliance(m, SQ, d, RelianceMode.DIFFERENCE) == 0.0


def test_divide_ignoring_x1_equals_orig_on_paired_rows(rng):
    d = random_dataset(rng, 7, 1, 1)
    m = FunctionModel(ignores_x1)
    assert e_divide(m, SQ, d) == e_orig(m, SQ, d.take(np.arange(6)))


def test_n2_switch_equals_divide(rng):
    for _ in range(20):
        d = random_dataset(rng, 2, 1, 2)
        m = LinearModel(rng.normal(size=1), rng.normal(size=2), rng.normal())
        assert e_switch(m, SQ, d) == e_divide(m, SQ, d)


def test_divide_odd_drops_last_row(rng):
    donor, recip = divide_rows(3)
    assert sorted(zip(donor, recip)) == [(0, 1), (1, 0)]
    d = random_dataset(rng, 3)
    m = LinearModel([1.3], [-0.4])
    y, X1, X2 = d.y, d.X1, d.X2
    direct = 0.5 * ((y[0] - m.predict(X1[1:2], X2[0:1])[0]) ** 2 + (y[1] - m.predict(X1[0:1], X2[1:2])[0]) ** 2)
    assert e_divide(m, SQ, d) == pytest.approx(direct, rel=1e-15)


def test_oracle_small_n_matches(rng):
    for n in range(2, 8):
        d = random_dataset(rng, n, 2, 1)
        m = LinearModel(rng.normal(size=2), rng.normal(size=1), rng.normal())
        assert e_switch(m, SQ, d) == e_switch_all_perm_oracle(m, SQ, d)


def test_oracle_guard(rng):
    with pytest.raises(TooLargeForOracle):
        e_switch_all_perm_oracle(half, SQ, random_dataset(rng, 9, 1, 0))


def test_permutation_invariance(rng):
    d = random_dataset(rng, 11, 2, 2)
    m = LinearModel(rng.normal(size=2), rng.normal(size=2), 0.1)
    perm = rng.permutation(d.n)
    e = d.take(perm)
    assert e_orig(m, SQ, d) == e_orig(m, SQ, e)
    assert e_switch(m, SQ, d) == e_switch(m, SQ, e)


def test_switch_unbiased_for_population():
    # finite population; the U-statistic averages to its population analogue
    rng = np.random.default_rng(5)
    pop = random_dataset(rng, 60, 1, 1)
    m = LinearModel([0.8], [0.2])
    pop_switch = np.mean(
        [(pop.y[j] - m.predict(pop.X1[i : i + 1], pop.X2[j : j + 1])[0]) ** 2 for i in range(60) for j in range(60)]
    )
    draws = []
    for _ in range(3000):
        rows = rng.integers(0, 60, size=6)
        draws.append(e_switch(m, SQ, pop.take(rows)))
    # sampling with replacement: independent draws of (i, j) for distinct positions
    se = np.std(draws) / np.sqrt(len(draws))
    assert abs(np.mean(draws) - pop_switch) < 4 * se


def test_hinge_margin():
    h = Hinge(margin=2.0)
    np.testing.assert_array_equal(h(np.array([1.0, -1.0]), np.array([0.5, 3.0])), [1.5, 5.0])
    d = Dataset([1.0, -1.0], [[1.0], [-1.0]], np.zeros((2, 0)))
    assert e_orig(LinearModel([1.0], []), Hinge(), d) == 0.0


def test_estimator_enum_switch(toy):
    assert model_reliance(half, SQ, toy, estimator=Estimator.DIVIDE) == 5.0


def test_algorithm_reliance(rng):
    tr = random_dataset(rng, 200, 1, 1, noise=0.1)
    te = random_dataset(np.random.default_rng(1), 200, 1, 1, noise=0.1)

    def fit(d):
        return LinearClass(d).minimize_combination(1.0, 0.0).model

    ar = algorithm_reliance(fit, SQ, tr, te)
    assert np.isfinite(ar)
