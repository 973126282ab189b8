"""Custom exceptions for infdpp."""


class InfDppError(Exception):
    """Base exception for infdpp."""

    exit_code = 1


class DomainError(InfDppError, ValueError):
    """Argument outside the domain of a function or kernel."""


class InvalidParameterError(InfDppError, ValueError):
    """Invalid counts, shapes, masks or parameter combinations."""


class UndefinedPerturbationOrder(DomainError):
    """n_s does not exist: s/2 + n lands on +-1/2 for every integer n."""

    def __init__(self, s: float):
        self.s = s
        super().__init__(f"n_s is undefined for s = {s} (s = -1-2k is excluded)")


class NumericalError(InfDppError):
    """A numerical hypothesis failed (singular system, collapse, non-contraction)."""

    exit_code = 2


class GramSingularError(NumericalError):
    """Gram matrix is numerically singular; the quadrature is too coarse."""

    def __init__(self, message: str, condition: float | None = None):
        self.condition = condition
        super().__init__(message)


class NonContractionError(NumericalError):
    """Operator has an eigenvalue above 1 where a positive contraction is required."""

    def __init__(self, max_eigenvalue: float):
        self.max_eigenvalue = max_eigenvalue
        super().__init__(f"Operator is not a contraction: max eigenvalue {max_eigenvalue:.12g}")


class SingularTransformError(NumericalError):
    """I + (g-1)K is not safely invertible."""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"I + (g-1)K is singular: condition number {condition:.3e}")


class CollapseError(NumericalError):
    """Windowed L + V lost dimension."""

    def __init__(self, expected: int, found: int, detail: str = ""):
        self.expected = expected
        self.found = found
        suffix = f" ({detail})" if detail else ""
        super().__init__(f"Rank collapse: expected {expected}, found {found}{suffix}")


class AngleDegeneracyWarning(UserWarning):
    """Angle between windowed L and V is numerically zero."""
