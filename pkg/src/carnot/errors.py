"""Exception types shared across the package."""


class CarnotError(Exception):
    """Base class for all errors raised by :mod:`carnot`."""


class InputError(CarnotError, ValueError):
    """Malformed or non-conforming input (dimension mismatch, bad parameter)."""


class SpecError(InputError):
    """Invalid Lie algebra description (grading, antisymmetry, Jacobi)."""


class BoundaryError(InputError):
    """A stencil or window reaches outside the sampled domain."""


class ExprError(CarnotError, ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class DomainError(ExprError):
    """log/sqrt of a negative number, or division by zero."""


class NonsmoothError(ExprError):
    """Symbolic differentiation through abs/min/max."""
