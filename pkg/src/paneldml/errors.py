"""Exception hierarchy.

``DataError`` subclasses signal bad input (CLI exit code 3);
``NumericalError`` subclasses signal a failed computation (exit code 4).
"""


class PanelDMLError(Exception):
    """Base class for all package errors."""


class DataError(PanelDMLError):
    pass


class NumericalError(PanelDMLError):
    pass


class ParseError(DataError):
    pass


class UnbalancedPanel(DataError):
    def __init__(self, unit, n_rows, n_waves):
        self.unit = unit
        self.n_rows = n_rows
        self.n_waves = n_waves
        super().__init__(f"unit {unit} has {n_rows} rows, expected {n_waves}")


class NonFiniteValue(DataError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"non-finite value in column {column!r} of row {row}")


class DuplicateWave(DataError):
    def __init__(self, unit, wave):
        self.unit = unit
        self.wave = wave
        super().__init__(f"unit {unit} has wave {wave} more than once")


class TooFewUnits(DataError):
    def __init__(self, n_units, k):
        self.n_units = n_units
        self.k = k
        super().__init__(f"{n_units} units cannot fill {k} folds (need at least {2 * k})")


class SingleWave(DataError):
    def __init__(self, what="transformation"):
        super().__init__(f"{what} needs at least two waves")


class RankDeficient(NumericalError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"design matrix is rank deficient; column {column!r} is linearly dependent")


class AllZeroVarianceColumns(NumericalError):
    def __init__(self):
        super().__init__("every column of the design matrix has zero variance")


class DegenerateDenominator(NumericalError):
    def __init__(self, detail=""):
        msg = "score denominator is zero: no residual treatment variation"
        super().__init__(f"{msg} ({detail})" if detail else msg)


class MomentConditionViolated(NumericalError):
    pass


class EmptyGrid(PanelDMLError, ValueError):
    def __init__(self):
        super().__init__("tuning requested but the hyperparameter grid is empty")
