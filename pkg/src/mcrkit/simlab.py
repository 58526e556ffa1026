"""Simulation harnesses: the misspecification coverage study and the
treatment-effect identity check."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset, SplitSpec, split
from .errors import McrError
from .estimators import SquaredError, e_orig
from .inference import BootstrapConfig, bootstrap_mcr_ci
from .linear_class import LinearClass, LinearModel, e_switch_fast
from .mcr_search import search_mcr

COEFS = np.array([1.0, 2.0])


@dataclass(frozen=True)
class DgpSpec:
    """``y = sum_j (j x_j - gamma x_j^2) + noise`` with bivariate normal x.

    The noise variance equals the variance of the signal.
    """

    gamma: float
    n: int
    seed: int = 0
    var_x: float = 1.0
    cov_x: float = 0.25

    def __post_init__(self):
        if abs(self.cov_x) > self.var_x:
            raise ValueError("covariance matrix must be positive semidefinite")

    @property
    def sigma(self) -> np.ndarray:
        return np.array([[self.var_x, self.cov_x], [self.cov_x, self.var_x]])


def f0_parts(X: np.ndarray, gamma: float) -> np.ndarray:
    """Additive components ``j x_j - gamma x_j^2`` as an n x 2 array."""
    return COEFS * X - gamma * X**2


def noise_variance(spec: DgpSpec) -> float:
    """Var(a'x - gamma x'x) for x ~ N(0, S): a'Sa + 2 gamma^2 tr(S^2)."""
    S = spec.sigma
    return float(COEFS @ S @ COEFS + 2.0 * spec.gamma**2 * np.trace(S @ S))


def simulate_dgp(spec: DgpSpec, rng: np.random.Generator | None = None) -> Dataset:
    """Draw ``spec.n`` rows; ``X1`` is the first coordinate, ``X2`` the second."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    X = rng.multivariate_normal(np.zeros(2), spec.sigma, size=spec.n)
    f = f0_parts(X, spec.gamma).sum(axis=1)
    y = f + rng.normal(scale=math.sqrt(noise_variance(spec)), size=spec.n)
    return Dataset(y, X[:, :1], X[:, 1:], ("y", "x1", "x2"))


def mr_additive(data: Dataset, gamma: float) -> float:
    """Empirical reliance of the true regression function on ``X1``.

    The true function is additive, so it is a linear model in the
    transformed columns and the fast switched-loss formula applies.
    """
    X = np.hstack([data.X1, data.X2])
    G = f0_parts(X, gamma)
    d = Dataset(data.y, G[:, :1], G[:, 1:])
    m = LinearModel([1.0], [1.0])
    return e_switch_fast(m, d) / e_orig(m, SquaredError(), d)


def fit_ols(train: Dataset) -> LinearModel:
    """Least-squares linear model with intercept."""
    erm = LinearClass(train).minimize_combination(1.0, 0.0)
    return erm.model


@dataclass(frozen=True)
class RepOutcome:
    mcr_lo: float
    mcr_hi: float
    pop_lo: float
    pop_hi: float
    std_lo: float
    std_hi: float
    n_infeasible: int


@dataclass(frozen=True)
class CoverageStudy:
    """Per-gamma outcomes of the coverage simulation."""

    gammas: tuple
    n: int
    n_train: int
    reps: int
    boot_reps: int
    mr_true: dict
    outcomes: dict
    failures: dict

    def mcr_table(self) -> list[dict]:
        rows = []
        for g in self.gammas:
            out = self.outcomes[g]
            if not out:
                continue
            mr = self.mr_true[g]
            width = float(np.mean([o.mcr_hi - o.mcr_lo for o in out]))
            cov_mr = float(np.mean([o.mcr_lo <= mr <= o.mcr_hi for o in out]))
            cov_pop = float(np.mean([o.mcr_lo <= o.pop_lo and o.pop_hi <= o.mcr_hi for o in out]))
            cond = float(np.mean([o.pop_lo <= mr <= o.pop_hi for o in out]))
            for target, cov in (("MR_f0", cov_mr), ("MCR_population", cov_pop), ("population_MCR_contains_MR_f0", cond)):
                rows.append(_row(g, target, self.n, len(out), cov, width))
        return rows

    def standard_table(self) -> list[dict]:
        rows = []
        for g in self.gammas:
            out = self.outcomes[g]
            if not out:
                continue
            mr = self.mr_true[g]
            width = float(np.mean([o.std_hi - o.std_lo for o in out]))
            cov = float(np.mean([o.std_lo <= mr <= o.std_hi for o in out]))
            rows.append(_row(g, "MR_f0", self.n, len(out), cov, width))
        return rows

    def width_ratio(self, gamma: float) -> float:
        out = self.outcomes[gamma]
        return float(
            np.mean([o.mcr_hi - o.mcr_lo for o in out]) / np.mean([o.std_hi - o.std_lo for o in out])
        )


def _row(gamma, target, n, reps, coverage, width) -> dict:
    return {"gamma": gamma, "target": target, "n": n, "reps": reps, "coverage": coverage, "mean_width": width}


def _standard_interval(sample: Dataset, n_train: int, boot_reps: int, seed: int) -> tuple[float, float]:
    draws = np.empty(boot_reps)
    for b in range(boot_reps):
        rng = np.random.default_rng([seed, b])
        rows = rng.integers(0, sample.n, size=sample.n)
        train, rest = rows[:n_train], rows[n_train:]
        model = fit_ols(sample.take(train))
        held = sample.take(rest)
        draws[b] = e_switch_fast(model, held) / e_orig(model, SquaredError(), held)
    return float(np.percentile(draws, 2.5)), float(np.percentile(draws, 97.5))


def coverage_study(
    gammas,
    n: int = 400,
    reps: int = 100,
    boot_reps: int = 100,
    seed: int = 0,
    n_train: int = 200,
    pop_size: int = 20_000,
    epsilon_factor: float = 0.1,
    var_x: float = 1.0,
    cov_x: float = 0.25,
    threads: int = 1,
    standard: bool = True,
    mcr: bool = True,
) -> CoverageStudy:
    """Coverage of bootstrap MCR intervals (and the plain bootstrap baseline).

    For each gamma a finite population is drawn once. Each rep samples
    ``n`` rows from it with replacement, fits the reference model on
    ``n_train`` of them, bootstraps MCR bounds on the rest, and records
    the population MCR interval at the same reference model.
    """
    gammas = tuple(float(g) for g in gammas)
    mr_true, outcomes, failures = {}, {}, {}
    for gi, g in enumerate(gammas):
        pop_spec = DgpSpec(g, pop_size, seed, var_x, cov_x)
        pop = simulate_dgp(pop_spec, np.random.default_rng([seed, gi, 0]))
        mr_true[g] = mr_additive(pop, g)
        eps = epsilon_factor * noise_variance(pop_spec)
        pop_class = LinearClass(pop)

        def one(rep: int, gi=gi, pop=pop, eps=eps, pop_class=pop_class):
            rng = np.random.default_rng([seed, gi, 1, rep])
            sample = pop.take(rng.integers(0, pop.n, size=n))
            split_seed = int(rng.integers(0, 2**63))
            boot_seed = int(rng.integers(0, 2**63))
            std = _standard_interval(sample, n_train, boot_reps, boot_seed) if standard else (math.nan, math.nan)
            if not mcr:
                return RepOutcome(math.nan, math.nan, math.nan, math.nan, *std, 0)
            train, analysis = split(sample, SplitSpec(n_train, split_seed))
            ref = fit_ols(train)
            pop_res = search_mcr(pop_class, e_orig(ref, SquaredError(), pop) + eps)
            cfg = BootstrapConfig(boot_reps, boot_seed, eps, ref)
            ci = bootstrap_mcr_ci(LinearClass, analysis, cfg)
            return RepOutcome(ci.lower, ci.upper, pop_res.lower, pop_res.upper, *std, ci.n_infeasible)

        def guarded(rep):
            try:
                return one(rep)
            except McrError as exc:
                return exc

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(guarded, range(reps)))
        else:
            results = [guarded(r) for r in range(reps)]
        outcomes[g] = [r for r in results if isinstance(r, RepOutcome)]
        failures[g] = sum(1 for r in results if not isinstance(r, RepOutcome))
    return CoverageStudy(gammas, n, n_train, reps, boot_reps, mr_true, outcomes, failures)


def coverage_experiment(gammas, n=400, reps=100, boot_reps=100, seed=0, **kw) -> list[dict]:
    """Coverage table for bootstrap MCR intervals."""
    return coverage_study(gammas, n, reps, boot_reps, seed, standard=False, **kw).mcr_table()


def standard_linear_baseline(gammas, n=400, reps=100, boot_reps=100, seed=0, **kw) -> list[dict]:
    """Coverage table for percentile intervals of a retrained linear model's reliance."""
    return coverage_study(gammas, n, reps, boot_reps, seed, mcr=False, **kw).standard_table()


# treatment-effect identity ---------------------------------------------------


@dataclass(frozen=True)
class CausalDgp:
    """Discrete covariate profiles with a binary treatment.

    ``p_treat`` is a scalar or one probability per profile; treatment is
    drawn given the profile only, so ignorability holds by construction.
    """

    c_values: np.ndarray
    c_probs: np.ndarray
    p_treat: object
    y_fn: Callable[[float, int], float]
    noise_sd: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.c_values, dtype=np.float64).reshape(-1)
        w = np.asarray(self.c_probs, dtype=np.float64).reshape(-1)
        if c.shape != w.shape or np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("c_probs must be a probability vector matching c_values")
        p = np.broadcast_to(np.asarray(self.p_treat, dtype=np.float64), c.shape).copy()
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("treatment probabilities must lie strictly between 0 and 1")
        object.__setattr__(self, "c_values", c)
        object.__setattr__(self, "c_probs", w / w.sum())
        object.__setattr__(self, "p_treat", p)

    def mean_table(self) -> np.ndarray:
        """``(K, 2)`` table of E[Y | C = c_k, T = t]."""
        return np.array([[self.y_fn(c, 0), self.y_fn(c, 1)] for c in self.c_values], dtype=np.float64)


def treatment_identity_rhs(dgp: CausalDgp) -> float:
    """Var(T) * sum over t of E[CATE(C)^2 | T = t]."""
    mu = dgp.mean_table()
    cate2 = (mu[:, 1] - mu[:, 0]) ** 2
    pt1 = dgp.c_probs * dgp.p_treat
    pt0 = dgp.c_probs * (1.0 - dgp.p_treat)
    p = pt1.sum()
    total = 0.0
    for joint in (pt0, pt1):
        mass = joint.sum()
        if mass > 0:
            total += float(joint @ cate2) / mass
    return p * (1.0 - p) * total


def causal_identity_check(dgp: CausalDgp, n_mc: int, seed: int = 0) -> tuple[float, float, float]:
    """Monte-Carlo switched-minus-original loss of the true regression
    function, next to its closed form.

    Returns ``(lhs, rhs, mc_se)``.
    """
    rng = np.random.default_rng(seed)
    mu = dgp.mean_table()
    K = dgp.c_values.size
    ca = rng.choice(K, size=n_mc, p=dgp.c_probs)
    cb = rng.choice(K, size=n_mc, p=dgp.c_probs)
    ta = (rng.random(n_mc) < dgp.p_treat[ca]).astype(int)
    tb = (rng.random(n_mc) < dgp.p_treat[cb]).astype(int)
    yb = mu[cb, tb] + dgp.noise_sd * rng.normal(size=n_mc)
    diff = (yb - mu[cb, ta]) ** 2 - (yb - mu[cb, tb]) ** 2
    se = float(np.std(diff, ddof=1) / math.sqrt(n_mc))
    return float(np.mean(diff)), treatment_identity_rhs(dgp), se


def random_causal_dgp(rng: np.random.Generator, n_profiles: int | None = None) -> CausalDgp:
    """A random discrete DGP for batch checks of the identity."""
    K = int(n_profiles or rng.integers(2, 6))
    values = np.arange(K, dtype=np.float64)
    probs = rng.dirichlet(np.ones(K))
    p_treat = rng.uniform(0.1, 0.9, size=K)
    table = rng.normal(size=(K, 2))
    noise = float(rng.uniform(0.0, 1.0))

    def y_fn(c, t, table=table):
        return float(table[int(c), int(t)])

    return CausalDgp(values, probs, p_treat, y_fn, noise)
