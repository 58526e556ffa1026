"""Global minimisation of a quadratic with at most one ellipsoid constraint.

The objective is ``b' Q b - 2 q' b + c``, where ``Q`` may be indefinite.
The constrained problem is whitened into a unit-ball trust-region
subproblem and solved through the secular equation on the eigenbasis of
the whitened Hessian.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NoConvergence, SingularConstraint

HARD_CASE_TOL = 1e-10


@dataclass(frozen=True)
class QuadraticObjective:
    """``value(b) = b' Q b - 2 q' b + c``."""

    Q: np.ndarray
    q: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        q = np.atleast_1d(np.asarray(self.q, dtype=np.float64))
        if Q.shape != (q.size, q.size):
            raise ValueError(f"Q has shape {Q.shape} but q has length {q.size}")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self) -> int:
        return self.q.size

    def value(self, beta) -> float:
        beta = np.asarray(beta, dtype=np.float64)
        return float(beta @ self.Q @ beta - 2.0 * self.q @ beta + self.c)

    def __add__(self, other: "QuadraticObjective") -> "QuadraticObjective":
        return QuadraticObjective(self.Q + other.Q, self.q + other.q, self.c + other.c)

    def scaled(self, w: float) -> "QuadraticObjective":
        return QuadraticObjective(w * self.Q, w * self.q, w * self.c)


@dataclass(frozen=True)
class EllipsoidConstraint:
    """Feasible set ``{b : b' M b <= radius}``."""

    M: np.ndarray
    radius: float

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=np.float64))
        object.__setattr__(self, "M", 0.5 * (M + M.T))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    def norm2(self, beta) -> float:
        beta = np.asarray(beta, dtype=np.float64)
        return float(beta @ self.M @ beta)


class QpStatus(enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    HARD_CASE = "HardCase"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class QpSolution:
    argmin: np.ndarray | None
    value: float
    multiplier: float
    status: QpStatus


def _lex_key(v: np.ndarray) -> float:
    nz = np.flatnonzero(np.abs(v) > 0)
    return float(v[nz[0]]) if nz.size else 0.0


def solve_unconstrained(obj: QuadraticObjective, tol: float = 1e-10) -> QpSolution:
    """Minimise over all of R^p, or report that the infimum is minus infinity."""
    evals, evecs = np.linalg.eigh(obj.Q)
    scale = max(1.0, float(np.max(np.abs(evals))) if evals.size else 1.0)
    if evals.size and evals[0] < -tol * scale:
        return QpSolution(None, -math.inf, 0.0, QpStatus.UNBOUNDED)
    qt = evecs.T @ obj.q
    keep = evals > tol * scale
    # q must lie in range(Q); otherwise a null direction descends forever
    if np.linalg.norm(qt[~keep]) > 1e-8 * (1.0 + np.linalg.norm(obj.q)):
        return QpSolution(None, -math.inf, 0.0, QpStatus.UNBOUNDED)
    beta = evecs[:, keep] @ (qt[keep] / evals[keep])
    return QpSolution(beta, obj.value(beta), 0.0, QpStatus.INTERIOR)


def _whiten(M: np.ndarray) -> np.ndarray:
    try:
        return linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        raise SingularConstraint("constraint matrix is not positive definite") from None


def solve_qp1qc(
    obj: QuadraticObjective,
    con: EllipsoidConstraint,
    rtol: float = 1e-9,
    max_iter: int = 200,
) -> QpSolution:
    """Global minimiser of ``obj`` over ``{b : b' M b <= radius}``.

    Returns the solution with its Lagrange multiplier ``lam`` so that
    ``(Q + lam M) b = q`` and ``Q + lam M`` is positive semidefinite.
    """
    p = obj.dim
    if con.M.shape != (p, p):
        raise ValueError(f"constraint is {con.M.shape}, objective has dimension {p}")
    L = _whiten(con.M)
    if con.radius == 0.0:
        beta = np.zeros(p)
        return QpSolution(beta, obj.value(beta), 0.0, QpStatus.BOUNDARY)

    # z = L' b turns the constraint into |z|^2 <= radius
    Linv_Q = linalg.solve_triangular(L, obj.Q, lower=True)
    A = linalg.solve_triangular(L, Linv_Q.T, lower=True)
    A = 0.5 * (A + A.T)
    b = linalg.solve_triangular(L, obj.q, lower=True)
    d, V = np.linalg.eigh(A)
    bt = V.T @ b
    r2 = con.radius
    bnorm = float(np.linalg.norm(b))
    dscale = max(1.0, float(np.max(np.abs(d))))

    def back(z):
        return linalg.solve_triangular(L.T, z, lower=False)

    def finish(z, lam, status):
        beta = back(z)
        return QpSolution(beta, obj.value(beta), float(lam), status)

    def znorm2(lam):
        return float(np.sum((bt / (d + lam)) ** 2))

    # interior candidate: A positive definite and its Newton point feasible
    if d[0] > 1e-12 * dscale:
        if znorm2(0.0) <= r2:
            return finish(V @ (bt / d), 0.0, QpStatus.INTERIOR)
    elif d[0] >= -1e-12 * dscale:
        # singular PSD: interior minimisers exist iff b lies in range(A)
        null = d <= 1e-12 * dscale
        if np.linalg.norm(bt[null]) <= HARD_CASE_TOL * max(bnorm, 1e-300):
            z = V[:, ~null] @ (bt[~null] / d[~null])
            if z @ z <= r2:
                return finish(z, 0.0, QpStatus.INTERIOR)

    lam_lo = max(0.0, -float(d[0]))
    bottom = d <= d[0] + 1e-12 * dscale
    if np.linalg.norm(bt[bottom]) <= HARD_CASE_TOL * max(bnorm, 1e-300):
        rest = ~bottom
        z_h = V[:, rest] @ (bt[rest] / (d[rest] + lam_lo)) if rest.any() else np.zeros(p)
        zz = float(z_h @ z_h)
        if zz <= r2:
            tau = math.sqrt(max(r2 - zz, 0.0))
            v = V[:, np.flatnonzero(bottom)[0]]
            cands = [finish(z_h + tau * v, lam_lo, QpStatus.HARD_CASE),
                     finish(z_h - tau * v, lam_lo, QpStatus.HARD_CASE)]
            best = min(cands, key=lambda s: s.value)
            tied = [s for s in cands if s.value <= best.value + 1e-12 * (1 + abs(best.value))]
            return max(tied, key=lambda s: _lex_key(s.argmin))

    lam = _secular_root(d, bt, r2, lam_lo, rtol, max_iter)
    if lam is None:
        # root indistinguishable from lam_lo: treat as a (nearly) hard case,
        # keeping the sign the bottom component of b asks for
        lam = lam_lo
        rest = ~bottom
        z = V[:, rest] @ (bt[rest] / (d[rest] + lam)) if rest.any() else np.zeros(p)
        tau = math.sqrt(max(r2 - float(z @ z), 0.0))
        k = np.flatnonzero(bottom)
        direction = V[:, k] @ bt[k]
        direction /= np.linalg.norm(direction)
        return finish(z + tau * direction, lam, QpStatus.HARD_CASE)
    z = V @ (bt / (d + lam))
    return finish(z, lam, QpStatus.BOUNDARY)


def _secular_root(d, bt, r2, lam_lo, rtol, max_iter) -> float | None:
    """Root of ``|z(lam)|^2 = r2`` on ``(lam_lo, inf)``.

    Newton on ``1/|z| - 1/sqrt(r2)``, which is nearly linear in lam, kept
    inside a bisection bracket. Returns None when the bracket collapses
    onto ``lam_lo`` before the tolerance is met.
    """
    delta = math.sqrt(r2)
    bnorm = float(np.linalg.norm(bt))
    lo = lam_lo
    hi = max(lam_lo, bnorm / delta - float(d[0])) + 1e-300
    while np.sum((bt / (d + hi)) ** 2) > r2:
        hi = 2.0 * hi + 1.0
    lam = hi
    resid = math.inf
    for _ in range(max_iter):
        w = bt / (d + lam)
        n2 = float(w @ w)
        resid = n2 - r2
        if abs(resid) <= rtol * r2:
            return lam
        if resid > 0:
            lo = lam
        else:
            hi = lam
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(hi)):
            near_lo = lo - lam_lo <= 8 * np.finfo(float).eps * max(1.0, abs(hi))
            return None if near_lo else lam
        nrm = math.sqrt(n2)
        dn2 = -2.0 * float(np.sum(w * w / (d + lam)))
        # psi = 1/|z| - 1/delta; d psi = -(1/2) |z|^-3 d|z|^2
        psi = 1.0 / nrm - 1.0 / delta
        dpsi = -0.5 * dn2 / nrm**3
        step = lam - psi / dpsi if dpsi > 0 else math.nan
        if not (lo < step < hi) or not math.isfinite(step):
            step = 0.5 * (lo + hi)
        lam = step
    raise NoConvergence("secular equation did not converge", abs(resid) / r2)
