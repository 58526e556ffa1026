"""Finite-sample constants linking empirical and population reliance bounds.

Each function returns the inflated (or deflated) loss threshold at which
empirical bounds should be computed, together with the additive error
term to apply to them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidConstants
from .estimators import RelianceMode
from .qp1qc import EllipsoidConstraint


class Theorem(enum.Enum):
    OUTER = "outer"
    INNER = "inner"
    BEST_IN_CLASS = "best_in_class"
    PHI_CI = "phi_ci"


@dataclass(frozen=True)
class TheoryConstants:
    """Loss bounds, sample size and confidence level.

    ``B_switch`` and ``B_ref`` default to ``B_ind``; ``b_orig`` is only
    needed for ratio-mode error terms. Set ``absolute=True``
    when thresholds are on the absolute-loss scale, which replaces
    ``2 B_ref`` by ``B_ind`` in the threshold adjustments.
    """

    B_ind: float
    n: int
    delta: float
    b_orig: float | None = None
    B_switch: float | None = None
    B_ref: float | None = None
    absolute: bool = False

    def __post_init__(self):
        if self.B_switch is None:
            object.__setattr__(self, "B_switch", float(self.B_ind))
        if self.B_ref is None:
            object.__setattr__(self, "B_ref", float(self.B_ind))
        self.validate()

    def validate(self, ratio: bool = False) -> None:
        if not (0.0 < self.delta <= 1.0):
            raise InvalidConstants(f"delta must lie in (0, 1], got {self.delta}")
        if self.n < 1:
            raise InvalidConstants(f"n must be positive, got {self.n}")
        for name in ("B_ind", "B_ref", "B_switch"):
            if getattr(self, name) < 0:
                raise InvalidConstants(f"{name} must be nonnegative")
        if ratio:
            if self.b_orig is None or not self.b_orig > 0:
                raise InvalidConstants("ratio constants need b_orig > 0")
            if self.b_orig > self.B_switch:
                raise InvalidConstants(
                    f"ratio constants need b_orig <= B_switch ({self.b_orig} > {self.B_switch})"
                )

    @property
    def ref_scale(self) -> float:
        return self.B_ind if self.absolute else 2.0 * self.B_ref


@dataclass(frozen=True)
class BoundReport:
    epsilon_in: float
    epsilon_adjusted: float
    Q: float
    mode: RelianceMode
    theorem: Theorem
    negative_epsilon: bool = False

    def to_dict(self) -> dict:
        return {
            "epsilon_in": self.epsilon_in,
            "epsilon_adjusted": self.epsilon_adjusted,
            "Q": self.Q,
            "mode": self.mode.value,
            "theorem": self.theorem.value,
            "negative_epsilon": self.negative_epsilon,
        }


def _root(log_arg: float, denom: float) -> float:
    return math.sqrt(math.log(log_arg) / denom)


def q_ratio(tc: TheoryConstants, k_switch: float, k_orig: float) -> float:
    """Worst-case shift of a ratio when the numerator drops by ``k_switch``
    and the denominator grows by ``k_orig``."""
    return tc.B_switch / tc.b_orig - (tc.B_switch - k_switch) / (tc.b_orig + k_orig)


def q_difference(k_switch: float, k_orig: float) -> float:
    return k_switch + k_orig


def _q(tc: TheoryConstants, mode: RelianceMode, k_switch: float, k_orig: float) -> float:
    if RelianceMode(mode) is RelianceMode.RATIO:
        tc.validate(ratio=True)
        return q_ratio(tc, k_switch, k_orig)
    return q_difference(k_switch, k_orig)


def _q_pointwise(tc: TheoryConstants, delta: float, mode: RelianceMode) -> float:
    # 6/delta covers the three events of the outer bound after splitting
    ks = tc.B_ind * _root(6.0 / delta, tc.n)
    ko = tc.B_ind * _root(6.0 / delta, 2.0 * tc.n)
    return _q(tc, mode, ks, ko)


def outer_bounds(tc: TheoryConstants, epsilon: float, mode: RelianceMode = RelianceMode.RATIO) -> BoundReport:
    """Threshold ``eps1 >= epsilon`` and error term ``Q1`` for the outer bounds.

    With probability at least ``1 - delta`` the population MCR interval at
    ``epsilon`` is contained in the empirical one at ``eps1``, widened by
    ``Q1`` on each side.
    """
    tc.validate()
    if epsilon < 0:
        raise InvalidConstants("epsilon must be nonnegative")
    eps1 = epsilon + tc.ref_scale * _root(3.0 / tc.delta, 2.0 * tc.n)
    return BoundReport(epsilon, eps1, _q_pointwise(tc, tc.delta, mode), RelianceMode(mode), Theorem.OUTER)


def best_in_class_ci(tc: TheoryConstants, mode: RelianceMode = RelianceMode.RATIO) -> BoundReport:
    """Threshold and error term for an interval containing the reliance of the best model in the class."""
    tc.validate()
    eps2 = tc.ref_scale * _root(6.0 / tc.delta, 2.0 * tc.n)
    q2 = _q_pointwise(tc, tc.delta / 2.0, mode)
    return BoundReport(0.0, eps2, q2, RelianceMode(mode), Theorem.BEST_IN_CLASS)


def q_uniform(
    tc: TheoryConstants,
    r: float,
    covering: int,
    mode: RelianceMode = RelianceMode.RATIO,
    covering_wide: int | None = None,
    delta: float | None = None,
) -> float:
    """Uniform deviation of empirical from population reliance over the class.

    ``covering`` is the covering number at radius ``r``; ``covering_wide``
    is the one at radius ``r * sqrt(2)`` and defaults to ``covering``
    (a larger radius never needs more elements, so this is conservative).
    """
    tc.validate()
    if r < 0:
        raise InvalidConstants("r must be nonnegative")
    if covering < 1 or (covering_wide is not None and covering_wide < 1):
        raise InvalidConstants("covering numbers must be at least 1")
    delta = tc.delta if delta is None else delta
    n_wide = covering if covering_wide is None else covering_wide
    s2 = math.sqrt(2.0)
    ks = tc.B_ind * _root(4.0 * n_wide / delta, tc.n) + 2.0 * r * s2
    ko = tc.B_ind * _root(4.0 * covering / delta, 2.0 * tc.n) + 2.0 * r
    return _q(tc, mode, ks, ko)


def inner_bounds(
    tc: TheoryConstants,
    epsilon: float,
    r: float,
    covering: int,
    mode: RelianceMode = RelianceMode.RATIO,
    covering_wide: int | None = None,
) -> BoundReport:
    """Threshold ``eps3 <= epsilon`` and error term ``Q3`` for the inner bounds.

    ``eps3`` may come out negative; that is legal (the reference model is
    then the only guaranteed member) and is flagged rather than rejected.
    """
    tc.validate()
    eps3 = epsilon - tc.ref_scale * _root(4.0 * covering / tc.delta, 2.0 * tc.n) - 2.0 * r
    q3 = q_uniform(tc, r, covering, mode, covering_wide, delta=tc.delta / 2.0)
    return BoundReport(epsilon, eps3, q3, RelianceMode(mode), Theorem.INNER, negative_epsilon=eps3 < 0)


def phi_ci_epsilons(tc: TheoryConstants) -> tuple[float, float]:
    """Thresholds for a descriptor's value at the best model and for its range."""
    tc.validate()
    eps4 = tc.ref_scale * _root(1.0 / tc.delta, 2.0 * tc.n)
    eps5 = tc.ref_scale * _root(2.0 / tc.delta, 2.0 * tc.n)
    return eps4, eps5


def b_ind_linear(con: EllipsoidConstraint, r_X: float, y_min: float, y_max: float) -> float:
    """Cap on squared error for ``b' M b <= r`` and ``x' M^-1 x <= r_X``.

    By Cauchy-Schwarz in the M-geometry, ``|x' b| <= sqrt(r_X * r)``.
    """
    if y_min > y_max:
        raise InvalidConstants("y_min must not exceed y_max")
    if r_X < 0:
        raise InvalidConstants("r_X must be nonnegative")
    s = math.sqrt(r_X * con.radius)
    return max((y_min - s) ** 2, (y_max + s) ** 2)


def b_ind_rkhs(cls, r_D: float, y_min: float, y_max: float) -> float:
    """Cap on squared error for the kernel class when ``v(x)' K_D^-1 v(x) <= r_D``.

    Predictions lie in ``mu +/- s`` with ``s = sqrt(r_D * r_k)``. The
    published form ``max[(y_min - (mu + s))^2, (y_max + (mu + s))^2]`` is
    only a valid cap for ``mu >= 0``; the exact extreme
    ``max[(y_min - mu - s)^2, (y_max - mu + s)^2]`` is taken alongside it.
    """
    if y_min > y_max:
        raise InvalidConstants("y_min must not exceed y_max")
    if r_D < 0:
        raise InvalidConstants("r_D must be nonnegative")
    s = math.sqrt(r_D * cls.r_k)
    mu = cls.mu
    published = max((y_min - (mu + s)) ** 2, (y_max + (mu + s)) ** 2)
    exact = max((y_min - mu - s) ** 2, (y_max - mu + s) ** 2)
    return max(published, exact)


def estimate_r_x(X, M) -> float:
    """Largest ``x' M^-1 x`` over the sample rows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    sol = np.linalg.solve(np.asarray(M, dtype=np.float64), X.T)
    return float(np.max(np.sum(X.T * sol, axis=0)))


def estimate_r_D(X, cls) -> float:
    """Largest ``v(x)' K_D^-1 v(x)`` over the sample rows."""
    from .rkhs_class import kernel_features

    V = kernel_features(X, cls)
    sol = np.linalg.solve(cls.K_D, V.T)
    return float(np.max(np.sum(V.T * sol, axis=0)))


def covering_segment(c: float, r: float) -> int:
    """Cover size for a segment of models whose predictions differ by at most ``c``."""
    if r <= 0:
        raise InvalidConstants("r must be positive")
    if c < 0:
        raise InvalidConstants("c must be nonnegative")
    return max(1, math.ceil(c / (2.0 * r)))


def convex_path_gap(theta_orig, theta_plus, X) -> float:
    """Largest prediction gap ``|x' (theta_plus - theta_orig)|`` over sample rows."""
    t0 = np.atleast_1d(np.asarray(theta_orig, dtype=np.float64))
    t1 = np.atleast_1d(np.asarray(theta_plus, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if t0.shape != t1.shape or X.shape[1] != t0.size:
        raise DimensionMismatch(f"shapes {t0.shape}, {t1.shape} and {X.shape} do not agree")
    if X.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(X @ (t1 - t0))))


def estimate_b_orig(train, fraction: float = 0.5, folds: int = 5, seed: int = 0) -> float:
    """Fraction of the cross-validated loss of a flexible kernel fit.

    A flexible model's CV loss approximates the best achievable expected
    loss; a fraction of it is a conservative floor for any model's loss.
    """
    from .rkhs_class import select_bandwidth, select_rk

    sigma = select_bandwidth(train, folds=folds, seed=seed)
    _, cv = select_rk(train, sigma, folds=folds, seed=seed)
    return fraction * cv
