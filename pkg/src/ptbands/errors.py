"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PTBandsError(Exception):
    """Base class for all package errors."""


class UnboundParameterError(PTBandsError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"parameter {self.name!r} is referenced by the model but has no value"


class UnknownParameterError(PTBandsError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown parameter {self.name!r}"


class DegeneracyError(PTBandsError, ValueError):
    """Raised when a computation needs a gapped spectrum but hits a band crossing."""

    def __init__(self, message: str, k=None):
        super().__init__(message)
        self.k = k


class ConvergenceError(PTBandsError, RuntimeError):
    """Raised by iterative solvers; carries the best iterate found."""

    def __init__(self, message: str, best=None, residual: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class NodeIsolationError(PTBandsError, RuntimeError):
    def __init__(self, message: str, interfering=()):
        super().__init__(message)
        self.interfering = list(interfering)


class NodalLineError(PTBandsError, RuntimeError):
    pass


class ConsistencyError(PTBandsError, RuntimeError):
    """Two independent routes to the same quantity disagree."""


class ConfigError(PTBandsError, ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
