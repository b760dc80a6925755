"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class PreconditionError(ValueError):
    """A parameter combination violates a documented precondition."""


class DivergenceError(ArithmeticError):
    """The convergence series c_phi diverges, so the estimate is not applicable."""


class BoundedConjugateRange(ArithmeticError):
    """The conjugate function jumps from a finite value to infinity.

    Raised when asking for the inverse of the conjugate of a Young function that
    grows only linearly, since no finite preimage exists for large arguments.
    """
