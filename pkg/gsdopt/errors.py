"""Exception hierarchy shared by the numeric core and the CLI.

The CLI maps ``DesignValidationError`` to exit code 2 and every other
``GsdError`` to exit code 3.
"""
from __future__ import annotations

from typing import Optional


class GsdError(Exception):
    """Root of every error raised by gsdopt."""


class DesignValidationError(GsdError, ValueError):
    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DomainError(GsdError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class GridResolutionError(GsdError, RuntimeError):
    """Quadrature grid could not reach the probability tolerance."""


class ConvergenceError(GsdError, RuntimeError):
    """Root finder or fixed-point iteration failed."""


class InfeasibleDesignError(GsdError, RuntimeError):
    """Stopping bounds cannot satisfy the requested error allocation."""


class CappedBoundaryWarning(UserWarning):
    """A spend increment underflowed and the bound was capped."""
