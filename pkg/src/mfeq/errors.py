"""Exception types shared across the package.

The CLI maps these onto its exit codes: scenario/validation problems -> 1,
numerical failures -> 2, verification failures -> 3.
"""


class ScenarioError(ValueError):
    """Base class for problems with scenario input."""


class ParseError(ScenarioError):
    """Scenario file is missing, malformed, or structurally wrong."""


class ValidationError(ScenarioError):
    """A scenario record violates one of its documented invariants."""


class NumericalError(ArithmeticError):
    """Base class for runtime numerical failures."""


class BlowUpError(NumericalError):
    """An ODE trajectory left the configured norm bound (finite-time explosion)."""


class SingularCoefficientError(NumericalError):
    """A matrix that must be inverted is singular (A00(t), sigma_t, covariance)."""


class GridMismatchError(ValueError):
    """Inputs sampled on incompatible time grids."""
