"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so every failure that can reach a user
should be one of these classes.
"""


class ContagionError(Exception):
    """Base class for library errors."""


class InputValidationError(ContagionError, ValueError):
    """Malformed or out-of-domain input values."""


class IngestionError(InputValidationError):
    def __init__(self, message, *, bank_ids=(), line=None, date=None):
        super().__init__(message)
        self.bank_ids = tuple(bank_ids)
        self.line = line
        self.date = date


class DegenerateBalanceSheetError(ContagionError, ArithmeticError):
    def __init__(self, message, bank_id=None):
        super().__init__(message)
        self.bank_id = bank_id


class ConsistencyError(ContagionError):
    """An internal invariant was violated (e.g. provisions above claims)."""


class PercolativePhaseError(ContagionError):
    """Contagion matrix is supercritical; the mean-size formula does not apply."""

    def __init__(self, lambda_max, row_sum_max=None):
        super().__init__(
            f"supercritical contagion matrix: lambda_max={lambda_max:.6g} >= 1; "
            "the mean cluster size formula is valid in the absence of a giant cluster only"
        )
        self.lambda_max = lambda_max
        self.row_sum_max = row_sum_max


class NumericalError(ContagionError, ArithmeticError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class GenerationError(ContagionError):
    pass


class CalibrationError(ContagionError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}
