"""Exception hierarchy shared by every module in the package."""

from __future__ import annotations


class PTPBError(Exception):
    """Base class for all package errors."""


class SingularMassError(PTPBError, ArithmeticError):
    """The mass matrix could not be solved against (broken model)."""


class EmptyBoxError(PTPBError, ValueError):
    """A constraint box has an empty or inverted interval."""


class DimensionError(PTPBError, ValueError):
    """Vector lengths disagree."""


class InfeasibleMarginError(PTPBError, ValueError):
    """The shrunk constraint band for the filtered error is empty."""


class SingularLambdaError(PTPBError, ArithmeticError):
    """A slack component fell below the floor in upsilon mode."""


class BarrierBreachError(PTPBError):
    """The filtered error reached the barrier radius ``varpi``."""

    def __init__(self, chi_norm: float, varpi: float):
        self.chi_norm = chi_norm
        self.varpi = varpi
        super().__init__(f"barrier breach: |chi| = {chi_norm:.6g} >= varpi = {varpi:.6g}")


class InvalidSigmaError(PTPBError, ValueError):
    """The CBF rate sigma lies outside [sigma_lower, sigma_upper)."""


class EmptyRegionError(PTPBError, ValueError):
    """A feasibility query was made over an empty region."""


class InsufficientWindowError(PTPBError, ValueError):
    """No samples fall in the steady-state window t >= t0 + T."""


class ConfigError(PTPBError, ValueError):
    """A configuration document failed to parse or violates the schema."""


class ValidationError(PTPBError, ValueError):
    """A parsed scenario violates a precondition (gains, timing, feasibility)."""
