"""Exception types shared across the package.

The CLI maps ``ValidationError`` to exit code 2 and ``NumericalError`` to
exit code 3.
"""


class ValidationError(ValueError):
    """Input violates a precondition or a structural invariant."""


class NumericalError(RuntimeError):
    """A numerical stage failed to converge or lost conditioning."""


class FrameError(NumericalError):
    """A local frame failed its almost-orthonormality certification."""
