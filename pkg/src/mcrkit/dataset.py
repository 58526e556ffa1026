"""Dataset container, CSV ingestion, splitting and imputation residuals."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataError,
    EmptyFile,
    InvalidSplitSize,
    MissingColumn,
    NonNumericCell,
    NoX2Columns,
)


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise DataError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y`` with covariates split into ``X1`` (of interest) and ``X2``.

    Arrays are copied and made read-only on construction.
    """

    y: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    column_names: tuple = ()

    def __post_init__(self):
        y = _frozen(self.y, 1)
        X1 = _frozen(self.X1, 2)
        X2 = np.asarray(self.X2, dtype=np.float64)
        if X2.size == 0:
            X2 = np.zeros((y.shape[0], 0))
        X2 = _frozen(X2, 2)
        n = y.shape[0]
        if n < 2:
            raise DataError(f"need at least 2 rows, got {n}")
        if X1.shape[0] != n or X2.shape[0] != n:
            raise DataError(
                f"row counts differ: y {n}, X1 {X1.shape[0]}, X2 {X2.shape[0]}"
            )
        if X1.shape[1] < 1:
            raise DataError("X1 must have at least one column")
        names = tuple(self.column_names)
        if not names:
            names = (
                ("y",)
                + tuple(f"x1_{k}" for k in range(X1.shape[1]))
                + tuple(f"x2_{k}" for k in range(X2.shape[1]))
            )
        if len(names) != 1 + X1.shape[1] + X2.shape[1]:
            raise DataError("column_names must list y, the X1 columns, then the X2 columns")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X1", X1)
        object.__setattr__(self, "X2", X2)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p1(self) -> int:
        return self.X1.shape[1]

    @property
    def p2(self) -> int:
        return self.X2.shape[1]

    @property
    def X(self) -> np.ndarray:
        return np.hstack([self.X1, self.X2])

    @property
    def outcome_name(self) -> str:
        return self.column_names[0]

    @property
    def x1_names(self) -> tuple:
        return self.column_names[1 : 1 + self.p1]

    @property
    def x2_names(self) -> tuple:
        return self.column_names[1 + self.p1 :]

    def take(self, rows) -> "Dataset":
        """Row subset (or resample, if ``rows`` repeats indices)."""
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.y[rows], self.X1[rows], self.X2[rows], self.column_names)

    def with_X2(self, X2, names: Sequence[str]) -> "Dataset":
        return Dataset(self.y, self.X1, X2, self.column_names[: 1 + self.p1] + tuple(names))

    def equals(self, other: "Dataset") -> bool:
        return (
            self.column_names == other.column_names
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.X1, other.X1)
            and np.array_equal(self.X2, other.X2)
        )


@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    seed: int = 0


def load_csv(path, outcome_col: str, x1_cols: Sequence[str]) -> Dataset:
    """Read a headed numeric CSV file.

    ``outcome_col`` becomes ``y``, ``x1_cols`` become ``X1`` and every other
    column becomes ``X2`` in file order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path}: header present but no data rows")
    x1_cols = list(x1_cols)
    for name in [outcome_col, *x1_cols]:
        if name not in header:
            raise MissingColumn(f"{path}: column {name!r} not in header {header}")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise NonNumericCell(i, f"<{len(row)} fields, expected {len(header)}>", ",".join(row))
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise NonNumericCell(i, header[j], cell) from None
    col = {h: k for k, h in enumerate(header)}
    x2_cols = [h for h in header if h != outcome_col and h not in x1_cols]
    return Dataset(
        y=values[:, col[outcome_col]],
        X1=values[:, [col[c] for c in x1_cols]],
        X2=values[:, [col[c] for c in x2_cols]] if x2_cols else np.zeros((len(body), 0)),
        column_names=(outcome_col, *x1_cols, *x2_cols),
    )


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it exactly."""
    table = np.column_stack([data.y, data.X1, data.X2])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(data.column_names)
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Uniform random train/analysis partition, deterministic in ``spec.seed``."""
    if not 0 < spec.n_train < data.n:
        raise InvalidSplitSize(f"n_train={spec.n_train} must lie strictly between 0 and n={data.n}")
    perm = np.random.default_rng(spec.seed).permutation(data.n)
    train = np.sort(perm[: spec.n_train])
    rest = np.sort(perm[spec.n_train :])
    return data.take(train), data.take(rest)


def impute_residualize(data: Dataset) -> Dataset:
    """Replace ``X1`` by its residual from a least-squares fit on ``[X2, 1]``."""
    if data.p2 == 0:
        raise NoX2Columns("imputation residuals need at least one X2 column")
    design = np.column_stack([data.X2, np.ones(data.n)])
    coef, *_ = np.linalg.lstsq(design, data.X1, rcond=None)
    resid = data.X1 - design @ coef
    return Dataset(data.y, resid, data.X2, data.column_names)
