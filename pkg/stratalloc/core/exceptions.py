class StratAllocError(ValueError):
    """
    Base class for every error raised by the stratalloc package.

    Subclasses ``ValueError`` so callers that only guard against invalid input
    keep working.
    """


class ValidationError(StratAllocError):
    """
    Raised when input data or configuration violates a documented invariant.

    :param message: Summary of the failure.
    :param problems: Optional list of diagnostics, each naming the line, stratum
                     or field at fault.
    """

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {problem}" for problem in self.problems)
        super().__init__(message)


class InfeasibleProblemError(StratAllocError):
    """Raised when an allocation or a constraint set admits no feasible point."""


class MissingMomentError(StratAllocError):
    """Raised when a stochastic model needs fourth moments the design does not carry."""


class UnsupportedModelError(StratAllocError):
    """Raised for (model, value function) pairs without a closed form."""


class LatticeTooLargeError(StratAllocError):
    """Raised when exhaustive enumeration would visit too many allocations."""


class SolverError(StratAllocError):
    """Raised when no start point of a solver produces a finite objective."""
