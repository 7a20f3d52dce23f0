"""Exception types shared across the toolkit."""


class AcdkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(AcdkitError):
    """Input data violates a structural invariant (ordering, emptiness, state)."""


class ParameterError(AcdkitError):
    """An argument is outside its documented range."""


class DomainError(AcdkitError):
    """A value is outside the mathematical domain of an operation."""


class PositivityError(AcdkitError):
    """A conditional mean turned non-positive during filtering.

    Carries the flat observation index at which the violation occurred.
    """

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"conditional mean <= 0 at observation {index} (value {value!r})")


class NonStationaryError(AcdkitError):
    """The parameter set fails the weak-stationarity condition."""


class InfiniteVarianceError(AcdkitError):
    """The second-moment finiteness condition fails."""


class EstimationError(AcdkitError):
    """Numerical optimization or standard-error computation failed."""
