"""Empirical losses and model reliance estimators.

All averages go through :func:`mcrkit._exact.exact_mean`, so estimators
built from the same multiset of per-row losses agree bit for bit. That is
what lets the all-permutation oracle match ``e_switch`` exactly, and makes
a model that never reads ``X1`` report a reliance ratio of exactly one.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from ._exact import exact_mean
from .dataset import Dataset
from .errors import TooLargeForOracle, ZeroDenominator

ORACLE_MAX_N = 8


@runtime_checkable
class PredictionModel(Protocol):
    """Anything with a vectorised ``predict(X1, X2) -> (m,)`` method."""

    def predict(self, X1: np.ndarray, X2: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FunctionModel:
    """Wrap a plain callable ``fn(X1, X2)`` as a prediction model."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def predict(self, X1, X2):
        return np.asarray(self.fn(X1, X2), dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class SquaredError:
    def __call__(self, y, pred):
        return (y - pred) ** 2


@dataclass(frozen=True)
class Hinge:
    margin: float = 1.0

    def __call__(self, y, pred):
        return np.maximum(self.margin - y * pred, 0.0)


class RelianceMode(enum.Enum):
    RATIO = "ratio"
    DIFFERENCE = "difference"


class Estimator(enum.Enum):
    SWITCH = "switch"
    DIVIDE = "divide"


def _losses(model, loss, y, X1, X2) -> np.ndarray:
    return np.asarray(loss(y, model.predict(X1, X2)), dtype=np.float64)


def e_orig(model, loss, data: Dataset) -> float:
    """Mean loss on the unpermuted rows."""
    return exact_mean(_losses(model, loss, data.y, data.X1, data.X2))


def switched_losses(model, loss, data: Dataset) -> np.ndarray:
    """Losses L(y_j, X1_i, X2_j) for every ordered pair i != j.

    Row ``i`` of the result holds the ``n - 1`` pairs sharing ``X1_i``.
    The model is called once per ``i`` so no n^2-by-p matrix is built.
    """
    n = data.n
    out = np.empty((n, n - 1))
    idx = np.arange(n)
    for i in range(n):
        others = idx[idx != i]
        X1 = np.broadcast_to(data.X1[i], (n - 1, data.p1))
        out[i] = _losses(model, loss, data.y[others], X1, data.X2[others])
    return out


def e_switch(model, loss, data: Dataset) -> float:
    """Average loss over all n(n-1) ordered pairs with X1 taken from another row."""
    n = data.n
    return exact_mean(switched_losses(model, loss, data), n * (n - 1))


def divide_rows(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(donor of X1, recipient) index pairs used by ``e_divide``.

    The first half is paired with the second half in both directions; with
    odd n the final row is left out.
    """
    m = n // 2
    a = np.arange(m)
    b = a + m
    return np.concatenate([a, b]), np.concatenate([b, a])


def e_divide(model, loss, data: Dataset) -> float:
    """Switched loss over the fixed half-split pairing."""
    donor, recip = divide_rows(data.n)
    vals = _losses(model, loss, data.y[recip], data.X1[donor], data.X2[recip])
    return exact_mean(vals)


def e_switch_all_perm_oracle(model, loss, data: Dataset) -> float:
    """Brute force over all n! permutations of the X1 rows.

    Each permutation contributes the losses at its non-fixed positions;
    the total is accumulated in exact rationals and normalised by
    ``(n-1)! * n * (n-1)``.
    """
    n = data.n
    if n > ORACLE_MAX_N:
        raise TooLargeForOracle(f"n={n} exceeds the oracle limit of {ORACLE_MAX_N}")
    total = Fraction(0)
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        perm = np.asarray(perm)
        vals = _losses(model, loss, data.y, data.X1[perm], data.X2)
        for v in vals[perm != rows].tolist():
            total += Fraction(v)
    return float(total / (math.factorial(n - 1) * n * (n - 1)))


def model_reliance(
    model,
    loss,
    data: Dataset,
    mode: RelianceMode = RelianceMode.RATIO,
    estimator: Estimator = Estimator.SWITCH,
) -> float:
    """Empirical model reliance on ``X1``, as a ratio or a difference."""
    eo = e_orig(model, loss, data)
    es = e_switch(model, loss, data) if estimator is Estimator.SWITCH else e_divide(model, loss, data)
    if RelianceMode(mode) is RelianceMode.DIFFERENCE:
        return es - eo
    if eo == 0.0:
        raise ZeroDenominator("ratio reliance is undefined when the original loss is zero")
    return es / eo


def algorithm_reliance(fit, loss, train: Dataset, test: Dataset) -> float:
    """Retrain without ``X1`` and compare held-out losses.

    ``fit(data)`` must return a prediction model. The reduced model sees a
    zero-filled ``X1`` so it cannot use that block.
    """
    full = fit(train)
    blank = Dataset(train.y, np.zeros_like(train.X1), train.X2, train.column_names)
    reduced = fit(blank)
    test_blank = Dataset(test.y, np.zeros_like(test.X1), test.X2, test.column_names)
    return e_orig(reduced, loss, test_blank) / e_orig(full, loss, test)
