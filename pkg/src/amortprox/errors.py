from __future__ import annotations

from typing import Any


class AmortProxError(Exception):
    """Base class for every error raised by amortprox."""


class DimensionError(AmortProxError):
    """Operand shapes do not conform."""


class OracleScaleError(AmortProxError):
    """A dense oracle was asked for a problem above its size guard."""


class ContractError(AmortProxError, ValueError):
    """A documented precondition of an operation does not hold."""


class NumericalError(AmortProxError):
    """Non-finite values or a failed factorization."""

    def __init__(self, message: str, *, pivot: int | None = None, term: str | None = None):
        super().__init__(message)
        self.pivot = pivot
        self.term = term


class ConvergenceError(AmortProxError):
    """An iterative inner solver hit its iteration cap."""

    def __init__(self, message: str, *, last_grad_norm: float):
        super().__init__(message)
        self.last_grad_norm = last_grad_norm


class TrainingDivergedError(AmortProxError):
    def __init__(self, message: str, *, step: int, log: Any = None):
        super().__init__(message)
        self.step = step
        self.log = log


class ConfigError(AmortProxError):
    """Invalid experiment configuration; `pointer` is a JSON pointer into the document."""

    def __init__(self, message: str, *, pointer: str = ""):
        super().__init__(message)
        self.pointer = pointer


class IngestionError(AmortProxError):
    def __init__(self, message: str, *, row: int, column: int):
        super().__init__(message)
        self.row = row
        self.column = column
