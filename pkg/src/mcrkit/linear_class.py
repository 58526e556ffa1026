"""Linear model classes and their quadratic reductions.

For a linear model the switched loss is a quadratic in the coefficients
whose matrices only need column sums and cross products, so it costs
O(n p^2) instead of O(n^2 p).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import DimensionMismatch, UnboundedCombination
from .estimators import Estimator, divide_rows
from .qp1qc import (
    EllipsoidConstraint,
    QpStatus,
    QuadraticObjective,
    solve_qp1qc,
    solve_unconstrained,
)

__all__ = [
    "LinearModel",
    "QuadraticObjective",
    "EllipsoidConstraint",
    "e_switch_fast",
    "quadratic_combination",
    "LinearClass",
    "CombinationResult",
]


@dataclass(frozen=True, eq=False)
class LinearModel:
    """``f(x1, x2) = x1' beta1 + x2' beta2 + intercept``."""

    beta1: np.ndarray
    beta2: np.ndarray
    intercept: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta1", np.atleast_1d(np.asarray(self.beta1, dtype=np.float64)))
        object.__setattr__(self, "beta2", np.asarray(self.beta2, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([self.beta1, self.beta2])

    def predict(self, X1, X2):
        # column-by-column accumulation: each row's arithmetic is the same
        # whatever the memory layout, which BLAS matvec does not promise
        X1 = np.asarray(X1, dtype=np.float64)
        out = np.zeros(X1.shape[0])
        for k in range(self.beta1.size):
            out = out + X1[:, k] * self.beta1[k]
        if self.beta2.size:
            X2 = np.asarray(X2, dtype=np.float64)
            for k in range(self.beta2.size):
                out = out + X2[:, k] * self.beta2[k]
        return out + self.intercept


@dataclass(frozen=True)
class _Moments:
    """Sufficient statistics for the original and switched quadratics."""

    n: int
    XtX: np.ndarray
    Xty: np.ndarray
    yty: float
    S: np.ndarray
    s: np.ndarray
    syy: float
    n_switch: int


def _design(data: Dataset) -> np.ndarray:
    return np.hstack([data.X1, data.X2])


def _switch_moments(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of the switched loss written as ``(1/n)(y'y - 2 s'b + b' S b)``."""
    n = data.n
    X1, X2, y = data.X1, data.X2, data.y
    one1 = X1.sum(axis=0)
    # X1' W v with W = (11' - I)/(n-1), never forming W
    X1Wy = (one1 * y.sum() - X1.T @ y) / (n - 1)
    X1WX2 = (np.outer(one1, X2.sum(axis=0)) - X1.T @ X2) / (n - 1)
    S = np.block([[X1.T @ X1, X1WX2], [X1WX2.T, X2.T @ X2]])
    s = np.concatenate([X1Wy, X2.T @ y])
    return S, s


def _moments(data: Dataset, estimator: Estimator) -> _Moments:
    X = _design(data)
    y = data.y
    if estimator is Estimator.SWITCH:
        S, s = _switch_moments(data)
        syy, m = float(y @ y), data.n
    else:
        donor, recip = divide_rows(data.n)
        Xs = np.hstack([data.X1[donor], data.X2[recip]])
        ys = y[recip]
        S, s, syy, m = Xs.T @ Xs, Xs.T @ ys, float(ys @ ys), donor.size
    return _Moments(data.n, X.T @ X, X.T @ y, float(y @ y), S, s, syy, m)


def e_switch_fast(model: LinearModel, data: Dataset) -> float:
    """Switched squared-error loss of a linear model in O(n p^2)."""
    beta = model.beta
    if beta.size != data.p1 + data.p2:
        raise DimensionMismatch(f"model has {beta.size} coefficients, data has {data.p1 + data.p2} columns")
    y = data.y - model.intercept
    S, s = _switch_moments(Dataset(y, data.X1, data.X2, data.column_names))
    return float((y @ y - 2.0 * s @ beta + beta @ S @ beta) / data.n)


def _combine(mom: _Moments, xi_orig: float, xi_switch: float) -> QuadraticObjective:
    a = xi_orig / mom.n
    b = xi_switch / mom.n_switch
    return QuadraticObjective(
        a * mom.XtX + b * mom.S,
        a * mom.Xty + b * mom.s,
        a * mom.yty + b * mom.syy,
    )


def quadratic_combination(
    data: Dataset,
    xi_orig: float,
    xi_switch: float,
    estimator: Estimator = Estimator.SWITCH,
) -> QuadraticObjective:
    """Quadratic in ``beta`` equal to ``xi_orig * e_orig + xi_switch * e_switch``.

    ``beta`` runs over the columns of ``[X1, X2]``; add a ones column to
    ``X2`` beforehand to include an intercept.
    """
    return _combine(_moments(data, Estimator(estimator)), xi_orig, xi_switch)


@dataclass(frozen=True, eq=False)
class CombinationResult:
    model: object
    value: float
    e_orig: float
    e_switch: float
    params: np.ndarray


@dataclass(eq=False)
class LinearClass:
    """Linear models on ``[X1, X2]``, optionally inside an ellipsoid.

    With ``intercept=True`` a ones column is appended to ``X2``; it is part
    of the coefficient vector (and of the constraint, if any) but is never
    switched. ``constraint.M`` must match the augmented dimension.
    """

    data: Dataset
    constraint: EllipsoidConstraint | None = None
    intercept: bool = True
    estimator: Estimator = Estimator.SWITCH
    rtol: float = 1e-9
    solver_calls: int = field(default=0, init=False)

    def __post_init__(self):
        self.estimator = Estimator(self.estimator)
        d = self.data
        if self.intercept:
            d = d.with_X2(np.column_stack([d.X2, np.ones(d.n)]), d.x2_names + ("(intercept)",))
        self._aug = d
        self._mom = _moments(d, self.estimator)
        p = d.p1 + d.p2
        if self.constraint is not None and self.constraint.M.shape != (p, p):
            raise DimensionMismatch(f"constraint is {self.constraint.M.shape}, class has {p} coefficients")
        self._orig = _combine(self._mom, 1.0, 0.0)
        self._switch = _combine(self._mom, 0.0, 1.0)

    @property
    def dim(self) -> int:
        return self._orig.dim

    @property
    def switch_optimum_ignores_x1(self) -> bool:
        """Whether the minus-side search may start at gamma = 0 and stop there.

        Holds for squared error with a free intercept under the full
        switched estimator, where the best model on a product distribution
        ignores X1.
        """
        return self.intercept and self.constraint is None and self.estimator is Estimator.SWITCH

    def orig_objective(self) -> QuadraticObjective:
        return self._orig

    def switch_objective(self) -> QuadraticObjective:
        return self._switch

    def model_from_params(self, beta) -> LinearModel:
        beta = np.asarray(beta, dtype=np.float64)
        p1 = self.data.p1
        if self.intercept:
            return LinearModel(beta[:p1], beta[p1:-1], beta[-1])
        return LinearModel(beta[:p1], beta[p1:])

    def params_of(self, model: LinearModel) -> np.ndarray:
        beta = model.beta
        return np.append(beta, model.intercept) if self.intercept else beta

    def feature_vector(self, x1, x2) -> np.ndarray:
        """Row ``x`` such that ``f(x1, x2) = x' params``."""
        v = np.concatenate([np.atleast_1d(x1), np.atleast_1d(x2)]).astype(np.float64)
        return np.append(v, 1.0) if self.intercept else v

    def losses_at(self, beta) -> tuple[float, float]:
        return self._orig.value(beta), self._switch.value(beta)

    def minimize_combination(self, xi_orig: float, xi_switch: float) -> CombinationResult:
        """Global minimiser of ``xi_orig * e_orig + xi_switch * e_switch`` over the class."""
        obj = _combine(self._mom, xi_orig, xi_switch)
        self.solver_calls += 1
        if self.constraint is None:
            sol = solve_unconstrained(obj)
        else:
            sol = solve_qp1qc(obj, self.constraint, rtol=self.rtol)
        if sol.status is QpStatus.UNBOUNDED:
            raise UnboundedCombination(
                f"combination ({xi_orig:g}, {xi_switch:g}) is unbounded below on this class"
            )
        eo, es = self.losses_at(sol.argmin)
        return CombinationResult(self.model_from_params(sol.argmin), sol.value, eo, es, sol.argmin)
