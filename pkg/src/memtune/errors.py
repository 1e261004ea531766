"""Exception hierarchy shared by the library and the command-line front end."""

from __future__ import annotations


class MemtuneError(Exception):
    """Base class for all errors raised by memtune."""

    exit_status = 1


class ValidationError(MemtuneError, ValueError):
    """An input violates a documented invariant."""

    exit_status = 2


class NumericalError(MemtuneError, ArithmeticError):
    """A computation could not be carried out (non-convergence, bad fit)."""

    exit_status = 3


class BucklingError(NumericalError):
    """Tensile stress would drop to zero or below; the membrane model is invalid.

    Attributes:
        p_crit: Smallest heating power (W) at which the stress reaches zero, if
            the failure comes from a power sweep.
        partial: Results computed before the offending point, if any.
    """

    def __init__(self, message: str, p_crit: float | None = None, partial=None):
        super().__init__(message)
        self.p_crit = p_crit
        self.partial = partial if partial is not None else []


class SolverError(NumericalError):
    """The linear heat solve did not meet its residual contract."""


class FitError(NumericalError):
    """A fit could not be performed or produced an inconsistent result."""


class ModelViolationError(FitError):
    """The data contradict the model assumed by an estimator (e.g. beating)."""


class DataFormatError(MemtuneError):
    """A data file could not be parsed. ``line`` is 1-based when known."""

    exit_status = 4

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line
