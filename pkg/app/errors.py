class CknLabError(Exception):
    """Base class for every error raised by the toolkit."""


class FieldEvaluationError(CknLabError, ValueError):
    """A field could not be evaluated at the requested points."""


class ExpressionError(CknLabError, ValueError):
    """A custom expression string is malformed or uses an unknown operator."""


class QuadratureError(CknLabError, ValueError):
    """An integral could not be formed (bad weight exponent, non-finite integrand)."""


class SphereDomainError(CknLabError, ValueError):
    """A point is off the unit sphere or a coordinate index is out of range."""


class NormalizationError(CknLabError, ValueError):
    """The unit-energy renormalization factor is not a positive finite number."""


class PhaseError(CknLabError):
    """The direct phase-derivative form was requested where the amplitude vanishes."""


class SearchError(CknLabError):
    """An extremal search could not be set up or had to be abandoned."""
