"""Exception types shared across the library.

The CLI maps these to stable exit codes: usage/format problems -> 2,
solver contract violations -> 3, numerical failures -> 4.
"""


class UsageError(ValueError):
    """Invalid argument, shape mismatch, or malformed input file."""


class ConfigurationError(UsageError):
    """A configuration value is inconsistent with the problem geometry."""


class IntegrityError(RuntimeError):
    """An internal invariant was violated (indicates a bug or corrupt state)."""


class DescentViolationError(IntegrityError):
    """The solver objective increased while the matching plan was frozen."""


class NumericalError(RuntimeError):
    """An iterative numerical routine failed to converge."""


class DegeneracyWarning(UserWarning):
    """A projection or factorization hit a rank-deficient input; the result
    returned is one valid member of a non-singleton solution set."""
