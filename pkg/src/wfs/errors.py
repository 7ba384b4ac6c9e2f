"""Exception hierarchy shared by all wfs modules."""


class WFSError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(WFSError, ValueError):
    pass


class StencilUnavailable(WFSError):
    pass


class EmptyMask(WFSError):
    pass


class NotProductGrid(WFSError):
    pass


class NonpositiveCoefficient(WFSError, ValueError):
    pass


class InvalidEpsilon(WFSError, ValueError):
    pass


class MissingStrategy(WFSError):
    pass


class NotDominatable(WFSError):
    pass


class NoPositiveMember(WFSError):
    pass


class QuadratureFailure(WFSError):
    pass


class GridTooCoarse(WFSError):
    pass


class HypothesisViolated(WFSError):
    pass


class OrderUnavailable(WFSError):
    pass


class SegmentLeavesDomain(WFSError):
    pass


class BoxMismatch(WFSError):
    pass


class NonUniformGrid(WFSError):
    pass


class SingularStep(WFSError):
    pass


class OutsideChart(WFSError):
    pass


class NotInvertible(WFSError):
    pass


class ExpressionSyntaxError(WFSError):
    """Parse failure; ``position`` is the 0-based character offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifier(ExpressionSyntaxError):
    pass


class ExpressionDomainError(WFSError):
    """Expression evaluation produced a non-finite value."""


class ConfigError(WFSError):
    pass
