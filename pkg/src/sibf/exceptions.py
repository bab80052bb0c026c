class DimensionError(ValueError):
    """Array shapes are inconsistent with each other or with an STFT setup."""


class SingularityError(ArithmeticError):
    """A matrix that must be positive definite is not."""
