import math

import numpy as np
import pytest

from mcrkit.dataset import Dataset
from mcrkit.errors import NonOptimizableDescriptor, TooManyInfeasibleReplicates, UnboundedCombination
from mcrkit.inference import (
    BootstrapConfig,
    CallableDescriptor,
    LinearDescriptor,
    PredictionAt,
    bootstrap_mcr_ci,
    rashomon_phi_ci,
    replicate_rng,
)
from mcrkit.linear_class import LinearClass
from mcrkit.qp1qc import EllipsoidConstraint
from mcrkit.theory_bounds import TheoryConstants

from conftest import random_dataset


def noise_x1(rng, n=120):
    X2 = rng.normal(size=(n, 1))
    X1 = rng.normal(size=(n, 1))
    return Dataset(2 * X2[:, 0] + rng.normal(size=n), X1, X2)


def ref_of(d):
    return LinearClass(d).minimize_combination(1.0, 0.0).model


def test_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(1, 0, 0.1, None)
    with pytest.raises(ValueError):
        BootstrapConfig(10, 0, 0.1, None, lower_pct=60, upper_pct=40)


def test_noise_x1_contains_one(rng):
    d = noise_x1(rng)
    res = bootstrap_mcr_ci(LinearClass, d, BootstrapConfig(30, 3, 1.0, ref_of(d)))
    assert res.lower <= 1.0 <= res.upper
    assert res.n_infeasible == 0 and res.minus_draws.size == 30


def test_determinism_serial_parallel(rng):
    d = noise_x1(rng)
    cfg = BootstrapConfig(8, 11, 0.2, ref_of(d))
    a = bootstrap_mcr_ci(LinearClass, d, cfg)
    b = bootstrap_mcr_ci(LinearClass, d, cfg)
    c = bootstrap_mcr_ci(LinearClass, d, cfg, threads=4)
    assert (a.lower, a.upper) == (b.lower, b.upper) == (c.lower, c.upper)
    assert replicate_rng(5, 2).integers(0, 10**9) == replicate_rng(5, 2).integers(0, 10**9)


def test_widens_with_epsilon(rng):
    d = noise_x1(rng)
    ref = ref_of(d)
    a = bootstrap_mcr_ci(LinearClass, d, BootstrapConfig(10, 1, 0.05, ref))
    b = bootstrap_mcr_ci(LinearClass, d, BootstrapConfig(10, 1, 0.5, ref))
    assert b.lower <= a.lower + 1e-9 and b.upper >= a.upper - 1e-9


class Broken:
    def __init__(self, d):
        pass

    def minimize_combination(self, xo, xs):
        raise UnboundedCombination("synthetic")


def test_too_many_infeasible(rng):
    d = noise_x1(rng)
    with pytest.raises(TooManyInfeasibleReplicates):
        bootstrap_mcr_ci(Broken, d, BootstrapConfig(5, 0, 0.1, ref_of(d)))


def _ridge(rng):
    d = random_dataset(rng, 80, 1, 1)
    cls = LinearClass(d, constraint=EllipsoidConstraint(np.eye(3), 2.0))
    return d, cls, cls.minimize_combination(1.0, 0.0).model


def test_prediction_ci_matches_sampling(rng):
    d, cls, ref = _ridge(rng)
    tc = TheoryConstants(5.0, d.n, 0.2)
    phi = PredictionAt([0.7], [-0.4])
    exact = rashomon_phi_ci(cls, phi, tc, ref)
    approx = rashomon_phi_ci(cls, CallableDescriptor(phi), tc, ref, n_samples=3000)
    assert approx.approximate and not exact.approximate
    assert exact.lower <= approx.lower + 1e-9 and approx.upper <= exact.upper + 1e-9
    assert approx.upper - approx.lower > 0.95 * (exact.upper - exact.lower)
    # the optimisers are feasible
    for theta in (exact.argmin, exact.argmax):
        assert cls.orig_objective().value(theta) <= exact.threshold * (1 + 1e-8)
        assert cls.constraint.norm2(theta) <= cls.constraint.radius * (1 + 1e-8)


def test_unconstrained_closed_form(rng):
    d = random_dataset(rng, 60, 1, 1)
    cls = LinearClass(d)
    ref = ref_of(d)
    tc = TheoryConstants(3.0, d.n, 0.1)
    w = np.array([1.0, -2.0, 0.5])
    res = rashomon_phi_ci(cls, LinearDescriptor(w), tc, ref)
    Q = cls.orig_objective()
    center = np.linalg.solve(Q.Q, Q.q)
    rho = res.threshold - Q.value(center)
    half = math.sqrt(rho * w @ np.linalg.solve(Q.Q, w))
    assert res.lower == pytest.approx(w @ center - half, rel=1e-9)
    assert res.upper == pytest.approx(w @ center + half, rel=1e-9)


def test_delta_one_is_bare_rashomon_set(rng):
    d = random_dataset(rng, 60, 1, 1)
    cls = LinearClass(d)
    res = rashomon_phi_ci(cls, PredictionAt([1.0], [1.0]), TheoryConstants(3.0, d.n, 1.0), ref_of(d))
    assert res.epsilon == 0.0
    assert res.upper == pytest.approx(res.lower, abs=1e-6)


def test_constant_descriptor_zero_width(rng):
    d, cls, ref = _ridge(rng)
    res = rashomon_phi_ci(cls, LinearDescriptor(np.zeros(3), 2.5), TheoryConstants(5.0, d.n, 0.2), ref)
    assert res.lower == res.upper == 2.5


def test_range_mode_nests(rng):
    d, cls, ref = _ridge(rng)
    tc = TheoryConstants(5.0, d.n, 0.2)
    phi = PredictionAt([0.3], [0.3])
    a = rashomon_phi_ci(cls, phi, tc, ref)
    b = rashomon_phi_ci(cls, phi, tc, ref, range_mode=True)
    assert b.lower <= a.lower + 1e-12 and a.upper <= b.upper + 1e-12


def test_non_optimizable(rng):
    d, cls, ref = _ridge(rng)
    with pytest.raises(NonOptimizableDescriptor):
        rashomon_phi_ci(cls, CallableDescriptor(lambda m: 0.0), TheoryConstants(5.0, d.n, 0.2), ref, allow_sampling=False)
