"""Exception hierarchy shared by all feasbound modules."""


class FeasboundError(Exception):
    """Base class for every error raised by this package."""


class ParseError(FeasboundError):
    """A case file could not be parsed.

    ``location`` names the offending place, e.g. ``"line 12"`` or
    ``"buses[3].kind"``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class ValidationError(FeasboundError):
    """Parsed data violates a case invariant (two slacks, bad limits, ...)."""


class UnsupportedFeature(FeasboundError):
    """The case uses modelling features outside the supported subset."""


class DegenerateBranchError(ValidationError):
    """A branch has zero series impedance."""


class DimensionMismatch(FeasboundError):
    """State or parameter vector length does not match the case layout."""


class ConvergenceError(FeasboundError):
    """The iterative smallest-singular-value computation failed."""


class DegenerateSigmaError(FeasboundError):
    """The smallest singular value is (nearly) repeated; its gradient is undefined."""


class NoConvergence(FeasboundError):
    """Newton iteration did not converge."""

    def __init__(self, iterations, last_norm, message=None):
        self.iterations = iterations
        self.last_norm = last_norm
        super().__init__(
            message or f"no convergence after {iterations} iterations (|H|={last_norm:.3e})"
        )


class EmptySeedSet(FeasboundError):
    """No restart produced a boundary point."""


class RankDeficientError(FeasboundError):
    """The boundary-system Jacobian lost full row rank at a curve point."""


class CorrectorDiverged(FeasboundError):
    """The spherical corrector failed to converge."""

    def __init__(self, iterations, message=None):
        self.iterations = iterations
        super().__init__(message or f"corrector diverged after {iterations} iterations")


class EmptyInput(FeasboundError):
    """An operation that needs a nonempty point set got an empty one."""
