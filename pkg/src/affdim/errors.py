"""Exception types shared across the package."""


class AffdimError(Exception):
    """Base class for all package-specific errors."""


class SingularMatrix(AffdimError):
    """A matrix is (numerically) non-invertible."""


class NonContracting(AffdimError):
    """An IFS map has operator norm >= 1."""


class DomainError(AffdimError, ValueError):
    """A numeric argument is outside its admissible range."""


class DepthExceedsWord(AffdimError):
    """A requested evaluation depth exceeds the available word length."""


class WordTooShort(AffdimError):
    """A word is shorter than the depth a radius requires."""

    def __init__(self, needed: int, available: int):
        self.needed = needed
        self.available = available
        super().__init__(f"need a word of length >= {needed}, got {available}")


class BudgetExceeded(AffdimError):
    """An enumeration or tree would exceed the configured cost budget."""


class MassNotNormalized(AffdimError):
    """A mass vector is not a probability vector on the simplex."""


class MaxIterations(AffdimError):
    """An iterative solver hit its iteration cap.

    The best iterate found so far is attached as ``solution``.
    """

    def __init__(self, message, solution=None):
        self.solution = solution
        super().__init__(message)


class GridTooFine(AffdimError):
    """A radius grid extends below what the sample size can resolve."""


class EmptyBall(AffdimError):
    """No cloud point falls inside the coarsest ball of a local estimate."""


class DegenerateFrame(AffdimError):
    """Random frame generation failed to produce a full-rank frame."""


class DepthInsufficientForGrid(AffdimError):
    """Coding depth leaves more truncation error than the finest radius allows."""


class ConfigInvalid(AffdimError):
    """An experiment config failed schema validation."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"config field '{field}': {reason}")
