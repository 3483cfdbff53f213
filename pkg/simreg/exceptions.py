"""Error hierarchy. Each class carries the exit code the CLI maps it to."""

from typing import Optional


class SimRegError(Exception):
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class UsageError(SimRegError):
    exit_code = 1


class DataError(SimRegError):
    exit_code = 2


class ParseError(DataError):
    """Malformed input file cell."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class JoinError(DataError):
    pass


class NumericalError(SimRegError):
    exit_code = 3


class ConvergenceError(NumericalError):
    def __init__(self, message: str, iterations: int = 0, gradient_norm: float = float("nan")):
        super().__init__(f"{message} (iterations={iterations}, gradient_norm={gradient_norm:.3e})")
        self.iterations = iterations
        self.gradient_norm = gradient_norm


class SeparationError(NumericalError):
    pass


class KernelNotPSDError(NumericalError):
    pass


class SigmaNotPSDError(NumericalError):
    pass
