"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems, data
problems and solver problems.
"""

from __future__ import annotations


class McrError(Exception):
    """Base class for every error raised by mcrkit."""


class ConfigError(McrError):
    """Invalid or incomplete run configuration."""


class DataError(McrError):
    """Input data cannot be used as given."""


class SolverError(McrError):
    """A numerical routine could not produce a trustworthy answer."""


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row: int, col: str, value: str):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"non-numeric cell at row {row}, column {col!r}: {value!r}")


class EmptyFile(DataError):
    pass


class InvalidSplitSize(DataError):
    pass


class NoX2Columns(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateData(DataError):
    pass


class TooLargeForOracle(McrError):
    pass


class ZeroDenominator(McrError):
    pass


class PairExpansionTooLarge(McrError):
    pass


class InvalidConstants(ConfigError):
    pass


class NonOptimizableDescriptor(ConfigError):
    pass


class SingularConstraint(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class UnboundedCombination(SolverError):
    pass


class InfeasibleEpsilon(SolverError):
    pass


class AllProbesUnbounded(SolverError):
    pass


class TooManyInfeasibleReplicates(SolverError):
    pass
