"""Exception hierarchy shared by all solver modules."""


class FpdOtError(ValueError):
    """Base class for every error raised by this package."""


class NegativeWeight(FpdOtError):
    pass


class NotNormalizable(FpdOtError):
    pass


class NotNormalized(FpdOtError):
    pass


class DimensionMismatch(FpdOtError):
    pass


class InvalidCost(FpdOtError):
    pass


class NotADensity(FpdOtError):
    pass


class Infeasible(FpdOtError):
    """Objective is infinite: the plan is not dominated by the reference."""


class DegenerateReference(FpdOtError):
    pass


class EpsilonNotPositive(FpdOtError):
    pass


class InfeasibleSupport(FpdOtError):
    """A row or column with positive mass has no admissible kernel entry."""


class SizeGuardExceeded(FpdOtError):
    pass


class UnsupportedSize(FpdOtError):
    pass


class EmptyFeasibleSet(FpdOtError):
    """No transport plan satisfies the moment bound."""


class ParseError(FpdOtError):
    pass
