"""Kernel regression class with a norm-ball constraint in the RKHS.

Members are ``f(x) = mu + sum_r k(x, D_r) alpha_r`` with
``alpha' K_D alpha <= r_k``. Squared-error combinations of the original
and switched losses are quadratics in ``alpha``, so probes reduce to the
same one-constraint quadratic program as ridge-constrained linear models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .dataset import Dataset
from .errors import DegenerateData, DimensionMismatch, PairExpansionTooLarge
from .estimators import Estimator, divide_rows
from .linear_class import CombinationResult
from .qp1qc import EllipsoidConstraint, QpStatus, QuadraticObjective, solve_qp1qc

DEFAULT_PAIR_BUDGET = 200_000_000
JITTER = 1e-10


@dataclass(frozen=True)
class RBF:
    """``k(x, x') = exp(-|x - x'|^2 / (2 sigma))``; sigma scales squared distance."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def evaluate(self, x, x2) -> float:
        d = np.asarray(x, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
        return float(np.exp(-(d @ d) / (2.0 * self.sigma)))

    def from_sqdist(self, d2: np.ndarray) -> np.ndarray:
        return np.exp(-d2 / (2.0 * self.sigma))

    def gram(self, A, B) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        if A.shape[0] == 0 or B.shape[0] == 0:
            return np.zeros((A.shape[0], B.shape[0]))
        return self.from_sqdist(cdist(A, B, "sqeuclidean"))


@dataclass(frozen=True, eq=False)
class RkhsClass:
    """Dictionary, kernel, offset and norm radius of the class.

    ``K_D`` is the dictionary Gram matrix; if its Cholesky factorisation
    fails a multiple of ``1e-10 * trace / R`` is added to the diagonal and
    recorded in ``jitter``.
    """

    dictionary: np.ndarray
    kernel: RBF
    mu: float
    r_k: float
    K_D: np.ndarray = field(init=False, repr=False)
    jitter: float = field(init=False, default=0.0)

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.dictionary, dtype=np.float64))
        D.setflags(write=False)
        object.__setattr__(self, "dictionary", D)
        object.__setattr__(self, "mu", float(self.mu))
        if not self.r_k > 0:
            raise ValueError("r_k must be positive")
        K = self.kernel.gram(D, D)
        K = 0.5 * (K + K.T)
        added = 0.0
        step = JITTER * np.trace(K) / K.shape[0]
        for _ in range(12):
            try:
                linalg.cholesky(K + added * np.eye(K.shape[0]), lower=True)
                break
            except linalg.LinAlgError:
                added = step if added == 0.0 else 10.0 * added
        K = K + added * np.eye(K.shape[0])
        K.setflags(write=False)
        object.__setattr__(self, "K_D", K)
        object.__setattr__(self, "jitter", added)

    @classmethod
    def from_training(cls, train: Dataset, sigma: float, r_k: float, mu: float | None = None) -> "RkhsClass":
        """Dictionary = training covariate rows, offset = training mean of y."""
        return cls(train.X, RBF(sigma), float(np.mean(train.y)) if mu is None else mu, r_k)

    @property
    def R(self) -> int:
        return self.dictionary.shape[0]

    @property
    def constraint(self) -> EllipsoidConstraint:
        return EllipsoidConstraint(self.K_D, self.r_k)


def kernel_features(X, cls: RkhsClass) -> np.ndarray:
    """``n x R`` matrix of kernel evaluations against the dictionary."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[0] == 0:
        return np.zeros((0, cls.R))
    if X.shape[1] != cls.dictionary.shape[1]:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, dictionary has {cls.dictionary.shape[1]}")
    return cls.kernel.gram(X, cls.dictionary)


@dataclass(frozen=True, eq=False)
class RkhsModel:
    cls: RkhsClass
    alpha: np.ndarray

    def predict(self, X1, X2):
        X = np.hstack([np.asarray(X1, dtype=np.float64), np.asarray(X2, dtype=np.float64)])
        return self.cls.mu + kernel_features(X, self.cls) @ self.alpha


@dataclass(frozen=True)
class _KernelMoments:
    n: int
    G_orig: np.ndarray
    g_orig: np.ndarray
    c_orig: float
    n_switch: int
    G_switch: np.ndarray
    g_switch: np.ndarray
    c_switch: float


def _split_factors(data: Dataset, cls: RkhsClass):
    """Per-block kernel factors: k([x1, x2], D_r) = E1[., r] * E2[., r]."""
    D = cls.dictionary
    if D.shape[1] != data.p1 + data.p2:
        raise DimensionMismatch(f"dictionary has {D.shape[1]} columns, data has {data.p1 + data.p2}")
    E1 = cls.kernel.gram(data.X1, D[:, : data.p1])
    if data.p2:
        E2 = cls.kernel.gram(data.X2, D[:, data.p1 :])
    else:
        E2 = np.ones((data.n, cls.R))
    return E1, E2


def _kernel_moments(data: Dataset, cls: RkhsClass, estimator: Estimator, budget: int) -> _KernelMoments:
    n, R = data.n, cls.R
    ytil = data.y - cls.mu
    E1, E2 = _split_factors(data, cls)
    K_orig = E1 * E2
    G_o, g_o, c_o = K_orig.T @ K_orig, K_orig.T @ ytil, float(ytil @ ytil)

    if estimator is Estimator.DIVIDE:
        donor, recip = divide_rows(n)
        B = E1[donor] * E2[recip]
        yb = ytil[recip]
        return _KernelMoments(n, G_o, g_o, c_o, donor.size, B.T @ B, B.T @ yb, float(yb @ yb))

    if n * (n - 1) * R > budget:
        raise PairExpansionTooLarge(
            f"switched design has n(n-1)R = {n * (n - 1) * R} entries, budget is {budget}"
        )
    # assemble the switched design one X1 donor at a time
    G_s = np.zeros((R, R))
    g_s = np.zeros(R)
    c_s = 0.0
    idx = np.arange(n)
    for i in range(n):
        others = idx != i
        block = E1[i] * E2[others]
        yb = ytil[others]
        G_s += block.T @ block
        g_s += block.T @ yb
        c_s += float(yb @ yb)
    return _KernelMoments(n, G_o, g_o, c_o, n * (n - 1), G_s, g_s, c_s)


def _combine(m: _KernelMoments, xi_orig: float, xi_switch: float) -> QuadraticObjective:
    a = xi_orig / m.n
    b = xi_switch / m.n_switch
    return QuadraticObjective(a * m.G_orig + b * m.G_switch, a * m.g_orig + b * m.g_switch, a * m.c_orig + b * m.c_switch)


def rkhs_objective(
    data: Dataset,
    cls: RkhsClass,
    xi_orig: float,
    xi_switch: float,
    estimator: Estimator = Estimator.SWITCH,
    budget: int = DEFAULT_PAIR_BUDGET,
) -> tuple[QuadraticObjective, EllipsoidConstraint]:
    """Quadratic in ``alpha`` equal to ``xi_orig * e_orig + xi_switch * e_switch``, plus the norm ball."""
    mom = _kernel_moments(data, cls, Estimator(estimator), budget)
    return _combine(mom, xi_orig, xi_switch), cls.constraint


@dataclass(eq=False)
class RkhsSolvable:
    """An :class:`RkhsClass` bound to a dataset, ready for probes."""

    data: Dataset
    cls: RkhsClass
    estimator: Estimator = Estimator.SWITCH
    budget: int = DEFAULT_PAIR_BUDGET
    rtol: float = 1e-9
    solver_calls: int = field(default=0, init=False)

    switch_optimum_ignores_x1 = False

    def __post_init__(self):
        self.estimator = Estimator(self.estimator)
        self._mom = _kernel_moments(self.data, self.cls, self.estimator, self.budget)
        self._orig = _combine(self._mom, 1.0, 0.0)
        self._switch = _combine(self._mom, 0.0, 1.0)
        self.constraint = self.cls.constraint

    @property
    def dim(self) -> int:
        return self.cls.R

    def orig_objective(self) -> QuadraticObjective:
        return self._orig

    def switch_objective(self) -> QuadraticObjective:
        return self._switch

    def model_from_params(self, alpha) -> RkhsModel:
        return RkhsModel(self.cls, np.asarray(alpha, dtype=np.float64))

    def feature_vector(self, x1, x2) -> np.ndarray:
        """Row ``v`` with ``f(x1, x2) = mu + v' alpha``."""
        x = np.concatenate([np.atleast_1d(x1), np.atleast_1d(x2)]).astype(np.float64)
        return kernel_features(x, self.cls)[0]

    @property
    def offset(self) -> float:
        return self.cls.mu

    def losses_at(self, alpha) -> tuple[float, float]:
        return self._orig.value(alpha), self._switch.value(alpha)

    def minimize_combination(self, xi_orig: float, xi_switch: float) -> CombinationResult:
        obj = _combine(self._mom, xi_orig, xi_switch)
        self.solver_calls += 1
        sol = solve_qp1qc(obj, self.constraint, rtol=self.rtol)
        assert sol.status is not QpStatus.UNBOUNDED
        eo, es = self.losses_at(sol.argmin)
        return CombinationResult(self.model_from_params(sol.argmin), sol.value, eo, es, sol.argmin)


def _cv_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def _first_best(errors: np.ndarray) -> int:
    # ties (within rounding) go to the earliest grid point
    best = float(np.min(errors))
    return int(np.flatnonzero(errors <= best + 1e-12 * (1.0 + abs(best)))[0])


def bandwidth_grid(X: np.ndarray, size: int = 25, lo: float = 1e-4, hi: float = 1e2) -> np.ndarray:
    """Log grid scaled by the median pairwise squared distance."""
    d2 = pdist(X, "sqeuclidean")
    if d2.size == 0 or not np.any(d2 > 0):
        raise DegenerateData("all covariate rows are identical")
    med = float(np.median(d2))
    if med == 0.0:
        med = float(np.median(d2[d2 > 0]))
    return med * np.logspace(np.log10(lo), np.log10(hi), size)


def nadaraya_watson_cv(X, y, sigmas, folds: int = 5, seed: int = 0) -> np.ndarray:
    """k-fold CV mean squared error of the Nadaraya-Watson smoother per sigma.

    Weights are normalised in log space, so as sigma shrinks the smoother
    tends to the nearest-neighbour rule instead of dividing zero by zero.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    parts = _cv_folds(y.size, folds, seed)
    out = np.zeros(len(sigmas))
    for test in parts:
        train = np.setdiff1d(np.arange(y.size), test)
        d2 = cdist(X[test], X[train], "sqeuclidean")
        for k, s in enumerate(sigmas):
            logw = -d2 / (2.0 * s)
            logw -= logw.max(axis=1, keepdims=True)
            w = np.exp(logw)
            pred = (w @ y[train]) / w.sum(axis=1)
            out[k] += float(np.sum((y[test] - pred) ** 2))
    return out / y.size


def select_bandwidth(train: Dataset, folds: int = 5, grid_size: int = 25, seed: int = 0) -> float:
    """Bandwidth minimising cross-validated Nadaraya-Watson error."""
    if not 2 <= folds <= train.n:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={train.n}")
    X = train.X
    grid = bandwidth_grid(X, grid_size)
    errs = nadaraya_watson_cv(X, train.y, grid, folds, seed)
    return float(grid[_first_best(errs)])


def rk_grid(y, size: int = 25, lo: float = 1e-2, hi: float = 1e3) -> np.ndarray:
    """Norm radii scaled by the outcome variance.

    Any member satisfies ``|f - mu| <= sqrt(r_k)``, so the variance of y
    is the natural unit.
    """
    scale = float(np.var(y))
    if scale <= 0:
        scale = 1.0
    return scale * np.logspace(np.log10(lo), np.log10(hi), size)


def select_rk(
    train: Dataset,
    sigma: float,
    folds: int = 5,
    grid=None,
    seed: int = 0,
    mu: float | None = None,
) -> tuple[float, float]:
    """Norm radius by k-fold CV of the constrained least-squares fit.

    The dictionary is the full training covariate matrix throughout.
    Returns ``(r_k, cv_loss)``; ties go to the smallest radius.
    """
    grid = rk_grid(train.y) if grid is None else np.asarray(grid, dtype=np.float64)
    mu = float(np.mean(train.y)) if mu is None else mu
    base = RkhsClass(train.X, RBF(sigma), mu, float(grid[0]))
    K = kernel_features(train.X, base)
    ytil = train.y - mu
    parts = _cv_folds(train.n, folds, seed)
    errs = np.zeros(grid.size)
    for test in parts:
        fit = np.setdiff1d(np.arange(train.n), test)
        Kf = K[fit]
        obj = QuadraticObjective(Kf.T @ Kf / fit.size, Kf.T @ ytil[fit] / fit.size, 0.0)
        for k, r in enumerate(grid):
            sol = solve_qp1qc(obj, EllipsoidConstraint(base.K_D, r))
            errs[k] += float(np.sum((ytil[test] - K[test] @ sol.argmin) ** 2))
    errs /= train.n
    best = _first_best(errs)
    return float(grid[best]), float(errs[best])
