"""Bootstrap intervals for MCR and Rashomon-set intervals for descriptors."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, optimize

from .dataset import Dataset
from .errors import (
    AllProbesUnbounded,
    InfeasibleEpsilon,
    NonOptimizableDescriptor,
    SolverError,
    TooManyInfeasibleReplicates,
)
from .estimators import SquaredError, e_orig
from .mcr_search import search_mcr
from .theory_bounds import TheoryConstants, phi_ci_epsilons


@dataclass(frozen=True)
class BootstrapConfig:
    """Settings for the percentile bootstrap of MCR bounds.

    ``reference`` stays fixed across replicates. With ``reanchor`` the loss
    threshold of each replicate is ``e_orig(reference, replicate) + epsilon``;
    otherwise it is computed once on the full analysis data.
    """

    replicates: int
    seed: int
    epsilon: float
    reference: object
    lower_pct: float = 2.5
    upper_pct: float = 97.5
    reanchor: bool = True
    max_infeasible_frac: float = 0.2
    tol: float = 1e-4
    max_iters: int = 60

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates")
        if not 0 < self.lower_pct < self.upper_pct < 100:
            raise ValueError("need 0 < lower_pct < upper_pct < 100")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass(frozen=True)
class BootstrapResult:
    lower: float
    upper: float
    minus_draws: np.ndarray
    plus_draws: np.ndarray
    n_infeasible: int
    replicates: int

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "n_infeasible": self.n_infeasible,
            "replicates": self.replicates,
            "minus_draws": [float(v) for v in self.minus_draws],
            "plus_draws": [float(v) for v in self.plus_draws],
        }


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one replicate, identical in serial and parallel runs."""
    return np.random.default_rng([int(seed), int(index)])


def _percentile(draws: np.ndarray, pct: float, side: str) -> float:
    if np.all(np.isfinite(draws)):
        return float(np.percentile(draws, pct))
    # infinite draws: take an order statistic rather than interpolate
    return float(np.percentile(draws, pct, method="lower" if side == "lower" else "higher"))


def bootstrap_mcr_ci(
    class_builder: Callable[[Dataset], object],
    data: Dataset,
    cfg: BootstrapConfig,
    threads: int = 1,
) -> BootstrapResult:
    """Percentile interval from MCR bounds recomputed on row resamples.

    ``class_builder(dataset)`` must return a solvable class bound to that
    dataset. Replicates whose search is infeasible are dropped and counted.
    """
    loss = SquaredError()
    base_eps = e_orig(cfg.reference, loss, data) + cfg.epsilon

    def one(b: int):
        rows = replicate_rng(cfg.seed, b).integers(0, data.n, size=data.n)
        rep = data.take(rows)
        eps_abs = e_orig(cfg.reference, loss, rep) + cfg.epsilon if cfg.reanchor else base_eps
        try:
            res = search_mcr(class_builder(rep), eps_abs, cfg.tol, cfg.max_iters)
        except (InfeasibleEpsilon, AllProbesUnbounded, SolverError):
            return None
        return res.lower, res.upper

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(cfg.replicates)))
    else:
        out = [one(b) for b in range(cfg.replicates)]

    kept = [o for o in out if o is not None]
    n_bad = cfg.replicates - len(kept)
    if n_bad > cfg.max_infeasible_frac * cfg.replicates or not kept:
        raise TooManyInfeasibleReplicates(f"{n_bad} of {cfg.replicates} replicates were infeasible")
    lo = np.array([k[0] for k in kept])
    hi = np.array([k[1] for k in kept])
    return BootstrapResult(
        lower=_percentile(lo, cfg.lower_pct, "lower"),
        upper=_percentile(hi, cfg.upper_pct, "upper"),
        minus_draws=lo,
        plus_draws=hi,
        n_infeasible=n_bad,
        replicates=cfg.replicates,
    )


# descriptors -----------------------------------------------------------------


@dataclass(frozen=True)
class LinearDescriptor:
    """``phi(theta) = weights' theta + offset`` on the class parameters."""

    weights: np.ndarray
    offset: float = 0.0

    def on_params(self, theta) -> float:
        return float(np.asarray(self.weights) @ np.asarray(theta) + self.offset)


@dataclass(frozen=True)
class PredictionAt:
    """Prediction of the model at one covariate point."""

    x1: np.ndarray
    x2: np.ndarray

    def resolve(self, cls) -> LinearDescriptor:
        v = cls.feature_vector(self.x1, self.x2)
        return LinearDescriptor(v, float(getattr(cls, "offset", 0.0)))

    def __call__(self, model) -> float:
        x1 = np.atleast_2d(np.asarray(self.x1, dtype=np.float64))
        x2 = np.asarray(self.x2, dtype=np.float64).reshape(1, -1)
        return float(model.predict(x1, x2)[0])


@dataclass(frozen=True)
class CallableDescriptor:
    """Arbitrary ``phi(model)``; only approximate optimisation is available."""

    fn: Callable[[object], float]

    def __call__(self, model) -> float:
        return float(self.fn(model))


@dataclass(frozen=True)
class PhiInterval:
    lower: float
    upper: float
    epsilon: float
    threshold: float
    approximate: bool = False
    argmin: np.ndarray | None = field(default=None, repr=False)
    argmax: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "epsilon": self.epsilon,
            "threshold": self.threshold,
            "approximate": self.approximate,
        }


def _ellipsoid_max(P: np.ndarray, p: np.ndarray, c: float, w: np.ndarray):
    """max w'x over {x : x'Px - 2p'x + c <= 0} for P positive definite."""
    L = linalg.cho_factor(P, lower=True)
    center = linalg.cho_solve(L, p)
    pc = float(p @ center)
    rho = pc - c
    if rho < 0:
        # a threshold equal to the minimum loss leaves only roundoff
        if rho < -1e-9 * (1.0 + abs(pc) + abs(c)):
            return -math.inf, None
        rho = 0.0
    Pw = linalg.cho_solve(L, w)
    s = float(w @ Pw)
    if s <= 0:
        return float(w @ center), center
    x = center + math.sqrt(rho / s) * Pw
    return float(w @ center + math.sqrt(rho * s)), x


def _max_linear(Qo, qo, co, tau, con, w):
    """max w'theta over the loss sublevel set, intersected with the class ball.

    Without a class constraint this is a single ellipsoid. With one, the
    maximum over the intersection equals the smallest maximum over the
    convex combinations of the two quadratic constraints (Lagrangian
    duality for convex quadratics), a one-dimensional search.
    """
    p = qo.size
    if con is None:
        evals = np.linalg.eigvalsh(Qo)
        if evals[0] <= 1e-12 * max(1.0, evals[-1]):
            # flat directions make the sublevel set unbounded along them
            null = np.linalg.eigh(Qo)[1][:, evals <= 1e-12 * max(1.0, evals[-1])]
            if np.linalg.norm(null.T @ w) > 1e-10 * (1 + np.linalg.norm(w)):
                return math.inf, None
            Qo = Qo + 1e-12 * max(1.0, evals[-1]) * np.eye(p)
        return _ellipsoid_max(Qo, qo, co - tau, w)

    M, r = con.M, con.radius

    def parts(t):
        return (1 - t) * Qo + t * M, (1 - t) * qo, (1 - t) * (co - tau) - t * r

    def solve(t):
        try:
            return _ellipsoid_max(*parts(t), w)
        except linalg.LinAlgError:
            return math.inf, None

    def gap(t):
        # derivative sign of the dual: ball violation minus loss violation
        _, x = solve(t)
        if x is None:
            return math.inf
        return (con.norm2(x) - r) - (float(x @ Qo @ x - 2.0 * qo @ x) + co - tau)

    # the dual is convex in t and its slope has the sign of gap(t); at the
    # minimiser both constraints are active unless an endpoint wins outright
    lo_t = 0.0
    g_lo = gap(lo_t)
    if not math.isfinite(g_lo):
        lo_t = 1e-12
        g_lo = gap(lo_t)
    if g_lo <= 0:
        return solve(lo_t)
    g_hi = gap(1.0)
    if g_hi >= 0:
        return solve(1.0)
    if math.isfinite(g_lo):
        t = optimize.brentq(gap, lo_t, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    else:
        res = optimize.minimize_scalar(lambda s: solve(s)[0], bounds=(1e-12, 1.0), method="bounded")
        t = float(res.x)
    return solve(t)


def _descriptor_linear(phi, cls):
    if isinstance(phi, LinearDescriptor):
        return phi
    if isinstance(phi, PredictionAt):
        return phi.resolve(cls)
    return None


def _sample_set(cls, tau, n_samples, rng):
    """Points of the Rashomon set along random rays from the loss minimiser."""
    Qo = cls.orig_objective()
    con = getattr(cls, "constraint", None)
    erm = cls.minimize_combination(1.0, 0.0).params
    pts = [erm]
    for _ in range(n_samples):
        u = rng.normal(size=erm.size)
        u /= np.linalg.norm(u)
        # largest step keeping the loss under tau: a u'Qu t^2 + 2 t u'(Q erm - q) + (loss - tau) <= 0
        a = float(u @ Qo.Q @ u)
        b = float(u @ (Qo.Q @ erm - Qo.q))
        c0 = Qo.value(erm) - tau
        t_max = _root_pos(a, b, c0)
        if con is not None:
            t_max = min(t_max, _root_pos(float(u @ con.M @ u), float(u @ con.M @ erm), con.norm2(erm) - con.radius))
        if not math.isfinite(t_max):
            t_max = 1e3
        pts.append(erm + rng.uniform(0.0, 1.0) ** (1.0 / erm.size) * t_max * u)
        pts.append(erm + t_max * u)
    return pts


def _root_pos(a, b, c0):
    # largest t >= 0 with a t^2 + 2 b t + c0 <= 0, given c0 <= 0
    if a <= 0:
        return math.inf if b <= 0 else max(0.0, -c0 / (2 * b))
    disc = b * b - a * c0
    return max(0.0, (-b + math.sqrt(max(disc, 0.0))) / a)


def rashomon_phi_ci(
    cls,
    phi,
    tc: TheoryConstants,
    reference,
    range_mode: bool = False,
    allow_sampling: bool = True,
    n_samples: int = 2000,
    seed: int = 0,
) -> PhiInterval:
    """Range of ``phi`` over models whose loss is within a threshold of ``reference``.

    The threshold is ``e_orig(reference) + eps``, with ``eps`` the point
    inflation or (``range_mode``) the range inflation from ``tc``.
    Linear descriptors and point predictions are optimised exactly; other
    descriptors are sampled, which gives an inner approximation flagged by
    ``approximate=True``.
    """
    eps4, eps5 = phi_ci_epsilons(tc)
    eps = eps5 if range_mode else eps4
    tau = e_orig(reference, SquaredError(), cls.data) + eps
    Qo = cls.orig_objective()
    con = getattr(cls, "constraint", None)

    lin = _descriptor_linear(phi, cls)
    if lin is not None:
        w = np.asarray(lin.weights, dtype=np.float64)
        hi, x_hi = _max_linear(Qo.Q, Qo.q, Qo.c, tau, con, w)
        neg_lo, x_lo = _max_linear(Qo.Q, Qo.q, Qo.c, tau, con, -w)
        if x_hi is None and not math.isinf(hi):
            raise InfeasibleEpsilon("no class member meets the loss threshold")
        return PhiInterval(-neg_lo + lin.offset, hi + lin.offset, eps, tau, False, x_lo, x_hi)

    if not allow_sampling:
        raise NonOptimizableDescriptor("descriptor has no exact optimiser and sampling is disabled")
    rng = np.random.default_rng(seed)
    pts = _sample_set(cls, tau, n_samples, rng)
    vals = np.array([phi(cls.model_from_params(t)) for t in pts])
    i_lo, i_hi = int(np.argmin(vals)), int(np.argmax(vals))
    return PhiInterval(float(vals[i_lo]), float(vals[i_hi]), eps, tau, True, pts[i_lo], pts[i_hi])
