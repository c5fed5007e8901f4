"""Exception types shared across the package.

Validation problems (bad config, bad shapes, bad domains) subclass
ValueError so callers can catch them uniformly; numeric blowups during a
run subclass ArithmeticError.
"""


class PhaseGridError(Exception):
    """Base class for package errors."""


class DomainError(PhaseGridError, ValueError):
    """Input outside the mathematical domain (non-finite phase, empty set,
    degenerate atan2 direction, asymmetric coupling where symmetry is
    required)."""


class ShapeError(PhaseGridError, ValueError):
    """Array shape or dtype does not match the contract."""


class ConfigError(PhaseGridError, ValueError):
    """Invalid or unknown configuration content."""


class NumericError(PhaseGridError, ArithmeticError):
    """Non-finite values appeared during a computation."""


class CheckpointError(PhaseGridError, ValueError):
    """Malformed, truncated, or unsupported checkpoint file."""


class GenerationError(PhaseGridError, RuntimeError):
    """A dataset generator exhausted its retry budget."""
