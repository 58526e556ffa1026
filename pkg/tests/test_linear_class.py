import numpy as np
import pytest

from mcrkit.errors import DimensionMismatch, UnboundedCombination
from mcrkit.estimators import Estimator, SquaredError, e_divide, e_orig, e_switch
from mcrkit.linear_class import LinearClass, LinearModel, e_switch_fast, quadratic_combination
from mcrkit.qp1qc import EllipsoidConstraint

from conftest import random_dataset

SQ = SquaredError()


def test_fast_toy(toy):
    assert e_switch_fast(LinearModel([0.5], []), toy) == pytest.approx(0.625, abs=1e-15)


def test_fast_zero_model(rng):
    d = random_dataset(rng, 13, 2, 1)
    zero = LinearModel([0, 0], [0])
    assert e_switch_fast(zero, d) == pytest.approx(d.y @ d.y / d.n, rel=1e-14)


def test_fast_random_matches_pairwise(rng):
    for _ in range(30):
        n, p1, p2 = int(rng.integers(2, 60)), int(rng.integers(1, 4)), int(rng.integers(0, 4))
        d = random_dataset(rng, n, p1, p2)
        m = LinearModel(rng.normal(size=p1), rng.normal(size=p2), rng.normal())
        slow = e_switch(m, SQ, d)
        assert abs(e_switch_fast(m, d) - slow) <= 1e-10 * (1 + abs(slow))


def test_combination_degenerate_cases(rng, toy):
    d = random_dataset(rng, 20, 1, 2)
    obj = quadratic_combination(d, 1.0, 0.0)
    X = d.X
    np.testing.assert_allclose(obj.Q, X.T @ X / d.n, rtol=1e-13)
    np.testing.assert_allclose(obj.q, X.T @ d.y / d.n, rtol=1e-13)
    assert quadratic_combination(toy, 0.0, 1.0).value([0.5]) == pytest.approx(0.625, abs=1e-15)


@pytest.mark.parametrize("estimator", [Estimator.SWITCH, Estimator.DIVIDE])
def test_combination_matches_estimators(rng, estimator):
    swf = e_switch if estimator is Estimator.SWITCH else e_divide
    for _ in range(20):
        d = random_dataset(rng, int(rng.integers(2, 30)), 2, 2)
        xo, xs = rng.normal(size=2)
        b = rng.normal(size=4)
        m = LinearModel(b[:2], b[2:])
        obj = quadratic_combination(d, xo, xs, estimator)
        want = xo * e_orig(m, SQ, d) + xs * swf(m, SQ, d)
        assert obj.value(b) == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_combination_is_linear(rng):
    d = random_dataset(rng, 15, 1, 2)
    a = quadratic_combination(d, 0.3, 0.0) + quadratic_combination(d, 0.0, -1.7)
    b = quadratic_combination(d, 0.3, -1.7)
    np.testing.assert_allclose(a.Q, b.Q, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(a.q, b.q, rtol=1e-12, atol=1e-14)


def test_nonnegative_weights_give_psd(rng):
    d = random_dataset(rng, 25, 2, 2)
    Q = quadratic_combination(d, 0.7, 1.3).Q
    np.testing.assert_array_equal(Q, Q.T)
    assert np.linalg.eigvalsh(Q)[0] >= -1e-12


def test_class_intercept_never_switched(rng):
    d = random_dataset(rng, 30, 1, 1)
    cls = LinearClass(d)
    b = rng.normal(size=3)
    m = cls.model_from_params(b)
    eo, es = cls.losses_at(b)
    assert eo == pytest.approx(e_orig(m, SQ, d), rel=1e-12)
    assert es == pytest.approx(e_switch(m, SQ, d), rel=1e-12)
    np.testing.assert_array_equal(cls.params_of(m), b)
    assert cls.feature_vector([1.0], [2.0]).tolist() == [1.0, 2.0, 1.0]


def test_erm_is_least_squares(rng):
    d = random_dataset(rng, 50, 2, 1)
    res = LinearClass(d).minimize_combination(1.0, 0.0)
    A = np.column_stack([d.X, np.ones(d.n)])
    ls, *_ = np.linalg.lstsq(A, d.y, rcond=None)
    np.testing.assert_allclose(res.params, ls, rtol=1e-8, atol=1e-10)


def test_unbounded_and_constraint_shape(rng):
    d = random_dataset(rng, 40, 1, 1)
    with pytest.raises(UnboundedCombination):
        LinearClass(d).minimize_combination(1.0, -1.0)
    with pytest.raises(DimensionMismatch):
        LinearClass(d, constraint=EllipsoidConstraint(np.eye(2), 1.0))
    res = LinearClass(d, constraint=EllipsoidConstraint(np.eye(3), 1.0)).minimize_combination(1.0, -1.0)
    assert res.params @ res.params <= 1.0 + 1e-9


def test_switch_optimum_flag(rng):
    d = random_dataset(rng, 10)
    assert LinearClass(d).switch_optimum_ignores_x1
    assert not LinearClass(d, intercept=False).switch_optimum_ignores_x1
    assert not LinearClass(d, estimator=Estimator.DIVIDE).switch_optimum_ignores_x1
    assert not LinearClass(d, constraint=EllipsoidConstraint(np.eye(3), 1.0)).switch_optimum_ignores_x1
