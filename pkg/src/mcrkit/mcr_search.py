"""Binary search for bounds on model reliance across a Rashomon set.

Each probe minimises a weighted sum of the original and switched losses
over the model class. A probe with a nonnegative minimum certifies a
bound on the reliance of *every* model whose original loss is at most
``eps_abs``:

* minus side, ``h = gamma * e_orig + e_switch``: reliance >= h / eps - gamma
* plus side (gamma < 0), ``h = e_orig + gamma * e_switch``:
  reliance <= (h / eps - 1) / gamma

The searches look for the gamma giving the tightest certificate; the
condition "h >= 0 and e_orig(minimiser) <= eps" is monotone in gamma,
which is what makes bisection valid.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import AllProbesUnbounded, InfeasibleEpsilon, UnboundedCombination

H_TOL = 1e-9
EPS_REL_TIGHT = 1e-6
TIGHT_MATCH = 1e-6
DEGENERATE_REL = 1e-9
MAX_EXPANSIONS = 64


class SolvableClass(Protocol):
    """A model class that can globally minimise loss combinations."""

    def minimize_combination(self, xi_orig: float, xi_switch: float): ...


class Side(enum.Enum):
    MINUS = "minus"
    PLUS = "plus"


@dataclass(frozen=True, eq=False)
class GammaProbe:
    gamma: float
    side: Side
    h_value: float
    e_orig: float
    e_switch: float
    model: object = None
    params: np.ndarray | None = None

    @property
    def reliance(self) -> float:
        return self.e_switch / self.e_orig if self.e_orig > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "side": self.side.value,
            "gamma": self.gamma,
            "h": self.h_value,
            "e_orig": self.e_orig,
            "e_switch": self.e_switch,
            "params": None if self.params is None else [float(v) for v in self.params],
        }


@dataclass(frozen=True, eq=False)
class McrBoundResult:
    eps_abs: float
    lower: float
    upper: float
    probes: tuple = ()
    lower_tight: bool = False
    upper_tight: bool = False
    minus_le_one: bool = False
    gamma_minus: float | None = None
    gamma_plus: float | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "eps_abs": self.eps_abs,
            "lower": self.lower,
            "upper": self.upper,
            "lower_tight": self.lower_tight,
            "upper_tight": self.upper_tight,
            "minus_le_one": self.minus_le_one,
            "gamma_minus": self.gamma_minus,
            "gamma_plus": self.gamma_plus,
            "degenerate": self.degenerate,
        }


def _as_probe(res, gamma: float, side: Side) -> GammaProbe:
    if side is Side.MINUS:
        h = gamma * res.e_orig + res.e_switch
    else:
        h = res.e_orig + gamma * res.e_switch
    return GammaProbe(gamma, side, h, res.e_orig, res.e_switch, res.model, getattr(res, "params", None))


def probe_minus(cls: SolvableClass, gamma: float) -> GammaProbe:
    """Minimise ``gamma * e_orig + e_switch`` over the class."""
    gamma = float(gamma)
    return _as_probe(cls.minimize_combination(gamma, 1.0), gamma, Side.MINUS)


def probe_plus(cls: SolvableClass, gamma: float) -> GammaProbe:
    """Minimise ``e_orig + gamma * e_switch`` over the class, ``gamma <= 0``."""
    gamma = float(gamma)
    if gamma > 0:
        raise ValueError("plus-side probes need gamma <= 0")
    return _as_probe(cls.minimize_combination(1.0, gamma), gamma, Side.PLUS)


def _minus_bound(p: GammaProbe, eps_abs: float) -> float:
    return p.h_value / eps_abs - p.gamma


def _plus_bound(p: GammaProbe, eps_abs: float) -> float:
    return (p.h_value / eps_abs - 1.0) / p.gamma


def _valid_minus(probes):
    return [p for p in probes if p.side is Side.MINUS and p.h_value >= -H_TOL]


def _valid_plus(probes):
    return [p for p in probes if p.side is Side.PLUS and p.gamma < 0 and p.h_value >= -H_TOL]


def lower_bound_at(probes, eps_abs: float) -> float:
    """Best lower bound on reliance certified by the minus-side probes."""
    if eps_abs <= 0:
        raise ValueError("eps_abs must be positive")
    vals = [_minus_bound(p, eps_abs) for p in _valid_minus(probes)]
    return max(vals) if vals else -math.inf


def upper_bound_at(probes, eps_abs: float) -> float:
    """Best upper bound on reliance certified by the plus-side probes."""
    if eps_abs <= 0:
        raise ValueError("eps_abs must be positive")
    vals = [_plus_bound(p, eps_abs) for p in _valid_plus(probes)]
    return min(vals) if vals else math.inf


def _is_tight(p: GammaProbe | None, eps_abs: float) -> bool:
    # Near-equality in loss is not enough on its own: close to gamma = 0 the
    # plus-side bound divides the loss gap by gamma. The flag promises that
    # the bound is the reliance of the probe model itself.
    if p is None:
        return False
    if not (abs(p.e_orig - eps_abs) <= EPS_REL_TIGHT * eps_abs or abs(p.h_value) <= H_TOL):
        return False
    bound = _minus_bound(p, eps_abs) if p.side is Side.MINUS else _plus_bound(p, eps_abs)
    return abs(bound - p.reliance) <= TIGHT_MATCH * (1.0 + abs(p.reliance))


def _best(probes, eps_abs, side: Side):
    if side is Side.MINUS:
        cand = _valid_minus(probes)
        return max(cand, key=lambda p: _minus_bound(p, eps_abs), default=None)
    cand = _valid_plus(probes)
    return min(cand, key=lambda p: _plus_bound(p, eps_abs), default=None)


class ProbeCache:
    """Probes keyed by (side, gamma), shared across searches.

    Unbounded combinations are remembered as ``None``. ``solver_calls``
    counts actual minimisations.
    """

    def __init__(self, cls: SolvableClass):
        self.cls = cls
        self._store: dict = {}
        self._lock = threading.Lock()
        self.solver_calls = 0

    def get(self, side: Side, gamma: float) -> GammaProbe | None:
        key = (side, float(gamma))
        with self._lock:
            if key in self._store:
                return self._store[key]
        try:
            probe = probe_minus(self.cls, gamma) if side is Side.MINUS else probe_plus(self.cls, gamma)
        except UnboundedCombination:
            probe = None
        with self._lock:
            self.solver_calls += 1
            self._store.setdefault(key, probe)
            return self._store[key]

    def probes(self) -> list[GammaProbe]:
        with self._lock:
            items = sorted(self._store.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
        return [p for _, p in items if p is not None]

    def unbounded(self, side: Side) -> list[float]:
        with self._lock:
            return sorted(g for (s, g), p in self._store.items() if s is side and p is None)


def _min_loss_probe(cache: ProbeCache, eps_abs: float) -> GammaProbe:
    if not eps_abs > 0:
        raise InfeasibleEpsilon(f"eps_abs={eps_abs!r}: reliance ratios need a positive loss threshold")
    erm = cache.get(Side.PLUS, 0.0)
    if erm is None:
        raise UnboundedCombination("the original loss is unbounded below on this class")
    slack = DEGENERATE_REL * erm.e_orig + 1e-300
    if eps_abs < erm.e_orig - slack:
        raise InfeasibleEpsilon(
            f"eps_abs={eps_abs!r} is below the smallest attainable loss {erm.e_orig!r}"
        )
    return erm


def _degenerate(erm: GammaProbe, eps_abs: float) -> bool:
    return eps_abs <= erm.e_orig * (1.0 + DEGENERATE_REL)


def _score(cache: ProbeCache, eps_abs: float, **extra) -> McrBoundResult:
    """Bounds at ``eps_abs`` from every probe in the cache.

    When ``eps_abs`` equals the smallest attainable loss the Rashomon set is
    the loss minimiser alone. Probes can then only approach the answer in
    a limit, so an untight bound is replaced by the minimiser's reliance
    (exact when the minimiser is unique).
    """
    probes = tuple(cache.probes())
    best_lo = _best(probes, eps_abs, Side.MINUS)
    best_hi = _best(probes, eps_abs, Side.PLUS)
    lower = _minus_bound(best_lo, eps_abs) if best_lo else -math.inf
    upper = _plus_bound(best_hi, eps_abs) if best_hi else math.inf
    lower_tight = _is_tight(best_lo, eps_abs)
    upper_tight = _is_tight(best_hi, eps_abs)
    erm = cache.get(Side.PLUS, 0.0)
    degenerate = erm is not None and _degenerate(erm, eps_abs)
    if degenerate:
        if not lower_tight:
            lower, lower_tight = erm.reliance, True
        if not upper_tight:
            upper, upper_tight = erm.reliance, True
    return McrBoundResult(
        eps_abs=eps_abs,
        lower=lower,
        upper=upper,
        probes=probes,
        lower_tight=lower_tight,
        upper_tight=upper_tight,
        degenerate=degenerate,
        **extra,
    )


def _holds(p: GammaProbe | None, eps_abs: float) -> bool:
    # The certified bound only needs h >= 0; the loss test picks the
    # tightest gamma, so rounding slack there cannot break soundness.
    return p is not None and p.h_value >= -H_TOL and p.e_orig <= eps_abs * (1.0 + 1e-12)


def _bisect(get, holds, bad: float, good: float, tol: float, max_iters: int) -> float:
    """Shrink [bad, good] (either orientation) around the switch point of ``holds``."""
    for _ in range(max_iters):
        if abs(good - bad) < tol:
            break
        mid = 0.5 * (bad + good)
        if holds(get(mid)):
            good = mid
        else:
            bad = mid
    return good


def search_mcr_minus(
    cls: SolvableClass,
    eps_abs: float,
    tol: float = 1e-4,
    max_iters: int = 60,
    cache: ProbeCache | None = None,
) -> McrBoundResult:
    """Tightest certified lower bound on reliance over ``{f : e_orig(f) <= eps_abs}``.

    The returned ``lower`` is scored over every probe in ``cache``; the
    ``upper`` field reflects whatever plus-side probes the cache already holds.
    """
    cache = cache or ProbeCache(cls)
    _min_loss_probe(cache, eps_abs)

    def get(g):
        return cache.get(Side.MINUS, g)

    def holds(p):
        return _holds(p, eps_abs)

    le_one = False
    gamma_star = None
    if holds(get(0.0)):
        if getattr(cls, "switch_optimum_ignores_x1", False):
            # the best switched-loss model has reliance <= 1 and is feasible
            le_one = True
            gamma_star = 0.0
        else:
            good, bad = 0.0, None
            g = -1.0
            for _ in range(MAX_EXPANSIONS):
                if holds(get(g)):
                    good, g = g, 2.0 * g
                else:
                    bad = g
                    break
            gamma_star = good if bad is None else _bisect(get, holds, bad, good, tol, max_iters)
    else:
        bad, good = 0.0, None
        g = 1.0
        for _ in range(MAX_EXPANSIONS):
            if holds(get(g)):
                good = g
                break
            bad, g = g, 2.0 * g
        if good is not None:
            gamma_star = _bisect(get, holds, bad, good, tol, max_iters)
    return _score(cache, eps_abs, minus_le_one=le_one, gamma_minus=gamma_star)


def search_mcr_plus(
    cls: SolvableClass,
    eps_abs: float,
    tol: float = 1e-4,
    max_iters: int = 60,
    cache: ProbeCache | None = None,
) -> McrBoundResult:
    """Tightest certified upper bound on reliance over ``{f : e_orig(f) <= eps_abs}``.

    Unbounded probes count as failures of the search condition.
    """
    cache = cache or ProbeCache(cls)
    _min_loss_probe(cache, eps_abs)

    def get(g):
        return cache.get(Side.PLUS, g)

    def holds(p):
        return _holds(p, eps_abs)

    good, bad = 0.0, None
    g = -1.0
    for _ in range(MAX_EXPANSIONS):
        if holds(get(g)):
            good, g = g, 2.0 * g
        else:
            bad = g
            break
    gamma_star = good if bad is None else _bisect(get, holds, bad, good, tol, max_iters)

    bounded = [p for p in cache.probes() if p.side is Side.PLUS and p.gamma < 0]
    if not bounded and cache.unbounded(Side.PLUS):
        raise AllProbesUnbounded(
            "every plus-side probe with gamma < 0 was unbounded; constrain the class"
        )
    return _score(cache, eps_abs, gamma_plus=gamma_star if gamma_star < 0 else None)


def search_mcr(cls, eps_abs, tol=1e-4, max_iters=60, cache=None) -> McrBoundResult:
    """Both searches against one probe cache."""
    cache = cache or ProbeCache(cls)
    lo = search_mcr_minus(cls, eps_abs, tol, max_iters, cache)
    hi = search_mcr_plus(cls, eps_abs, tol, max_iters, cache)
    return _score(
        cache, eps_abs, minus_le_one=lo.minus_le_one, gamma_minus=lo.gamma_minus, gamma_plus=hi.gamma_plus
    )


def bound_curve(
    cls: SolvableClass,
    eps_grid,
    tol: float = 1e-4,
    max_iters: int = 60,
    cache: ProbeCache | None = None,
) -> list[McrBoundResult]:
    """Bounds at every ``eps_abs`` in the grid from the union of all probes.

    Every probe certifies a bound at every threshold, so after all the
    searches have run each grid point is re-scored against the full cache.
    """
    cache = cache or ProbeCache(cls)
    runs = []
    for eps in eps_grid:
        eps = float(eps)
        lo = search_mcr_minus(cls, eps, tol, max_iters, cache)
        hi = search_mcr_plus(cls, eps, tol, max_iters, cache)
        runs.append((eps, lo, hi))
    return [
        _score(cache, eps, minus_le_one=lo.minus_le_one, gamma_minus=lo.gamma_minus, gamma_plus=hi.gamma_plus)
        for eps, lo, hi in runs
    ]
