"""Exception hierarchy shared by all dipres modules."""


class DipresError(Exception):
    """Base class for every error raised by the package."""


# system model
class DimensionMismatch(DipresError):
    pass


class AsymmetricDipole(DipresError):
    pass


class Disconnected(DipresError):
    pass


class AmbiguousPath(DipresError):
    pass


class InfiniteResonance(DipresError):
    """Raised when the dipole difference along a path vanishes, so no resonance amplitude exists."""


# propagator
class NonFiniteField(DipresError):
    pass


class StepUnderflow(DipresError):
    pass


# dyson series
class OrderTooHigh(DipresError):
    pass


class QuadratureNotConverged(DipresError):
    pass


class BoundViolated(DipresError):
    """An iterated field integral exceeded its analytic bound (indicates a bug, not physics)."""


# slow limit
class UncoupledPair(DipresError):
    pass


class ZeroField(DipresError):
    pass


class IntermediateResonance(DipresError):
    """The intermediate step is itself resonant; the stepwise branch must be used instead."""


# fast limit
class DegenerateW(DipresError):
    pass


class NotZeroArea(DipresError):
    pass


# resonance
class DegenerateFlat(DipresError):
    """The squared phase derivative is constant on the window; no isolated resonance points exist."""

    def __init__(self, message, window):
        super().__init__(message)
        self.window = window


# cli
class ScenarioError(DipresError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
        self.column = column


class ValidationError(ScenarioError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
