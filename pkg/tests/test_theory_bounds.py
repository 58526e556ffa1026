import math

import numpy as np
import pytest

from mcrkit.errors import DimensionMismatch, InvalidConstants
from mcrkit.estimators import RelianceMode
from mcrkit.qp1qc import EllipsoidConstraint
from mcrkit.rkhs_class import RBF, RkhsClass
from mcrkit.theory_bounds import (
    TheoryConstants,
    b_ind_linear,
    b_ind_rkhs,
    best_in_class_ci,
    convex_path_gap,
    covering_segment,
    estimate_r_D,
    estimate_r_x,
    inner_bounds,
    outer_bounds,
    phi_ci_epsilons,
    q_difference,
    q_ratio,
    q_uniform,
)

R, D = RelianceMode.RATIO, RelianceMode.DIFFERENCE


# second implementation, written straight from the formulas ------------------


def ref_q1(Bi, Bs, bo, n, d):
    return Bs / bo - (Bs - Bi * math.sqrt(math.log(6 / d) / n)) / (bo + Bi * math.sqrt(math.log(6 / d) / (2 * n)))


def ref_q(Bi, Bs, bo, n, d, r, N, Nw):
    num = Bs - (Bi * math.sqrt(math.log(4 * Nw / d) / n) + 2 * r * math.sqrt(2))
    den = bo + (Bi * math.sqrt(math.log(4 * N / d) / (2 * n)) + 2 * r)
    return Bs / bo - num / den


def ref_q_diff(Bi, n, d, r, N, Nw):
    return Bi * math.sqrt(math.log(4 * Nw / d) / n) + 2 * r * math.sqrt(2) + Bi * math.sqrt(
        math.log(4 * N / d) / (2 * n)
    ) + 2 * r


def test_outer_examples():
    tc = TheoryConstants(0.0, 100, 0.1, b_orig=0.5, B_switch=0.0, B_ref=0.0)
    r = outer_bounds(tc, 0.3, D)
    assert r.epsilon_adjusted == 0.3 and r.Q == 0.0
    r = outer_bounds(TheoryConstants(1.0, 1000, 0.05), 0.0, D)
    assert r.epsilon_adjusted == pytest.approx(2 * math.sqrt(math.log(60) / 2000))
    assert r.epsilon_adjusted == pytest.approx(0.0905, abs=5e-5)


def test_outer_sqrt_scaling():
    a = outer_bounds(TheoryConstants(1.0, 500, 0.05), 0.0, D)
    b = outer_bounds(TheoryConstants(1.0, 2000, 0.05), 0.0, D)
    assert b.epsilon_adjusted == pytest.approx(a.epsilon_adjusted / 2)
    assert b.Q == pytest.approx(a.Q / 2)


def test_best_in_class():
    tc = TheoryConstants(1.0, 10_000, 0.05)
    r = best_in_class_ci(tc, D)
    assert r.Q == pytest.approx((1 + 1 / math.sqrt(2)) * math.sqrt(math.log(240) / 1e4))
    assert r.Q == pytest.approx(0.0400, abs=5e-5)
    tcr = TheoryConstants(1.0, 500, 0.1, b_orig=0.3, B_switch=2.0)
    half = TheoryConstants(1.0, 500, 0.05, b_orig=0.3, B_switch=2.0)
    assert best_in_class_ci(tcr).Q == pytest.approx(outer_bounds(half, 0.0).Q, rel=1e-14)
    assert best_in_class_ci(TheoryConstants(0.0, 50, 0.1, b_orig=1.0, B_switch=1.0), R).Q == 0.0


def test_q_uniform_examples():
    assert q_uniform(TheoryConstants(0.0, 10, 0.1), 0.0, 1, D) == 0.0
    tc = TheoryConstants(1.0, 10_000, 0.1, b_orig=0.5, B_switch=2.0)
    got = q_uniform(tc, 0.01, 100, R)
    assert got == pytest.approx(ref_q(1.0, 2.0, 0.5, 10_000, 0.1, 0.01, 100, 100), rel=1e-12)
    assert q_uniform(tc, 0.01, 200, R) > got


def test_inner_examples():
    tc = TheoryConstants(1.0, 100, 0.1, B_ref=0.0)
    assert inner_bounds(tc, 0.4, 0.0, 1, D).epsilon_adjusted == 0.4
    neg = inner_bounds(TheoryConstants(1.0, 10, 0.1), 0.01, 0.01, 10, D)
    assert neg.negative_epsilon and neg.epsilon_adjusted < 0
    tc = TheoryConstants(1.0, 1000, 0.1, b_orig=0.5, B_switch=2.0)
    assert inner_bounds(tc, 0.2, 0.01, 50).Q == q_uniform(tc, 0.01, 50, R, delta=0.05)


def test_phi_epsilons():
    assert phi_ci_epsilons(TheoryConstants(1.0, 100, 1.0))[0] == 0.0
    for d in (0.01, 0.2, 0.9):
        e4, e5 = phi_ci_epsilons(TheoryConstants(1.0, 100, d))
        assert e5 > e4
    e4, _ = phi_ci_epsilons(TheoryConstants(4.0, 2873, 0.05))
    assert e4 == pytest.approx(8 * math.sqrt(math.log(20) / 5746))
    assert e4 == pytest.approx(0.1825, abs=5e-4)


def test_dual_implementation_random():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(10, 10**6))
        d = float(rng.uniform(1e-4, 1))
        Bi = float(rng.uniform(0.1, 10))
        Bs = Bi * float(rng.uniform(1, 2))
        bo = float(rng.uniform(0.01, 0.99)) * Bs
        r = float(rng.uniform(0, 0.05))
        N = int(rng.integers(1, 10**4))
        Nw = int(rng.integers(1, N + 1))
        tc = TheoryConstants(Bi, n, d, b_orig=bo, B_switch=Bs)
        assert outer_bounds(tc, 0.1).Q == pytest.approx(ref_q1(Bi, Bs, bo, n, d), rel=1e-12, abs=1e-14)
        assert q_uniform(tc, r, N, R, covering_wide=Nw) == pytest.approx(
            ref_q(Bi, Bs, bo, n, d, r, N, Nw), rel=1e-12, abs=1e-14
        )
        assert q_uniform(tc, r, N, D, covering_wide=Nw) == pytest.approx(
            ref_q_diff(Bi, n, d, r, N, Nw), rel=1e-12, abs=1e-14
        )


def test_ratio_reduces_to_difference():
    tc = TheoryConstants(1.0, 100, 0.1, b_orig=0.5, B_switch=2.0)
    ks, ko = 0.03, 0.02
    # the ratio error term at b_orig -> B_switch scale collapses to the difference form to first order
    small = 1e-7
    assert q_ratio(tc, ks * small, ko * small) / small == pytest.approx(
        (ks + tc.B_switch / tc.b_orig * ko) / tc.b_orig, rel=1e-5
    )
    assert q_difference(ks, ko) == ks + ko


def test_monotonicity_sweeps():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(10, 10**5))
        d = float(rng.uniform(0.01, 0.5))
        base = dict(B_ind=1.0, n=n, delta=d, b_orig=0.4, B_switch=2.0)
        q = outer_bounds(TheoryConstants(**base), 0.0).Q
        assert q >= 0
        assert outer_bounds(TheoryConstants(**{**base, "n": 2 * n}), 0.0).Q <= q
        assert outer_bounds(TheoryConstants(**{**base, "delta": d / 2}), 0.0).Q >= q
        assert outer_bounds(TheoryConstants(**{**base, "B_ind": 1.5}), 0.0).Q >= q
        e = outer_bounds(TheoryConstants(**base), 0.0).epsilon_adjusted
        assert outer_bounds(TheoryConstants(**{**base, "B_ref": 2.0}), 0.0).epsilon_adjusted >= e
        qu = q_uniform(TheoryConstants(**base), 0.01, 10)
        assert q_uniform(TheoryConstants(**base), 0.01, 20) >= qu


def test_absolute_flag_uses_b_ind():
    a = outer_bounds(TheoryConstants(3.0, 100, 0.1, B_ref=1.0, absolute=True), 0.0, D)
    assert a.epsilon_adjusted == pytest.approx(3.0 * math.sqrt(math.log(30) / 200))


def test_invalid_constants():
    with pytest.raises(InvalidConstants):
        TheoryConstants(1.0, 10, 0.0)
    with pytest.raises(InvalidConstants):
        TheoryConstants(1.0, 0, 0.1)
    with pytest.raises(InvalidConstants):
        outer_bounds(TheoryConstants(1.0, 10, 0.1), 0.0, R)
    with pytest.raises(InvalidConstants):
        outer_bounds(TheoryConstants(1.0, 10, 0.1, b_orig=3.0, B_switch=2.0), 0.0, R)


def test_b_ind_linear():
    con = EllipsoidConstraint(np.eye(2), 1.0)
    assert b_ind_linear(con, 1.0, 0.0, 1.0) == 4.0
    assert b_ind_linear(EllipsoidConstraint(np.eye(2), 0.0), 1.0, -3.0, 2.0) == 9.0
    a, s = 1.5, math.sqrt(2.0 * 0.5)
    assert b_ind_linear(EllipsoidConstraint(np.eye(2), 0.5), 2.0, -a, a) == pytest.approx((a + s) ** 2)


def test_b_ind_rkhs():
    cls = RkhsClass(np.zeros((1, 1)), RBF(1.0), 0.0, 1.0)
    assert b_ind_rkhs(cls, 1.0, -1.0, 1.0) == 4.0
    tiny = RkhsClass(np.zeros((1, 1)), RBF(1.0), 0.0, 1e-300)
    assert b_ind_rkhs(tiny, 1.0, -2.0, 1.0) == pytest.approx(4.0)


def _sample_ball(rng, M, r, size):
    L = np.linalg.cholesky(M)
    u = rng.normal(size=(size, M.shape[0]))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    rad = np.sqrt(r) * rng.uniform(0, 1, size=(size, 1)) ** (1 / M.shape[0])
    rad[: size // 4] = np.sqrt(r)  # boundary samples
    return np.linalg.solve(L.T, (u * rad).T).T


def test_b_ind_linear_soundness():
    rng = np.random.default_rng(2)
    B = rng.normal(size=(3, 3))
    M = B @ B.T + 0.5 * np.eye(3)
    con = EllipsoidConstraint(M, 2.0)
    cap = b_ind_linear(con, 1.5, -1.0, 2.0)
    betas = _sample_ball(rng, M, 2.0, 5000)
    xs = _sample_ball(rng, np.linalg.inv(M), 1.5, 5000)
    ys = rng.uniform(-1.0, 2.0, size=5000)
    ys[:100] = -1.0
    losses = (ys - np.sum(betas * xs, axis=1)) ** 2
    assert np.all(losses <= cap * (1 + 1e-12))


def test_b_ind_rkhs_soundness_negative_mu():
    rng = np.random.default_rng(3)
    Dx = rng.normal(size=(6, 2))
    cls = RkhsClass(Dx, RBF(1.0), -0.7, 2.0)
    X = rng.normal(size=(5000, 2))
    r_D = estimate_r_D(X, cls)
    cap = b_ind_rkhs(cls, r_D, -1.0, 1.0)
    alphas = _sample_ball(rng, cls.K_D, cls.r_k, 5000)
    from mcrkit.rkhs_class import kernel_features

    f = cls.mu + np.sum(kernel_features(X, cls) * alphas, axis=1)
    ys = rng.choice([-1.0, 1.0], size=5000)
    assert np.all((ys - f) ** 2 <= cap * (1 + 1e-12))


def test_r_estimates():
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert estimate_r_x(X, np.eye(2)) == 4.0
    assert estimate_r_x(X, np.diag([1.0, 4.0])) == 1.0


def test_covering_segment():
    assert covering_segment(1.0, 0.1) == 5
    assert covering_segment(0.2, 0.1) == 1
    assert covering_segment(0.0, 0.3) == 1
    with pytest.raises(InvalidConstants):
        covering_segment(1.0, 0.0)


def test_convex_path_gap():
    rng = np.random.default_rng(4)
    t = rng.normal(size=3)
    X = rng.normal(size=(20, 3))
    assert convex_path_gap(t, t, X) == 0.0
    d = rng.normal(size=3)
    assert convex_path_gap(t, t + d, X[:1]) == pytest.approx(abs(X[0] @ d))
    assert convex_path_gap(t, t + d, X) == pytest.approx(max(abs(x @ d) for x in X))
    with pytest.raises(DimensionMismatch):
        convex_path_gap(t, t, X[:, :2])
