"""Exception hierarchy.

Two families matter to callers: ``InvalidInput`` (a contract was violated by
the arguments, CLI exit code 2) and ``NumericalFailure`` (the numbers could not
be produced, CLI exit code 3).
"""


class WigpropError(Exception):
    """Base class for every error raised by the package."""


class InvalidInput(WigpropError, ValueError):
    pass


class NumericalFailure(WigpropError, ArithmeticError):
    pass


# classical dynamics
class NonPositiveInterval(InvalidInput):
    pass


class CoefficientDomain(InvalidInput):
    pass


class OutOfInterval(InvalidInput):
    pass


class GridMismatch(InvalidInput):
    pass


class ConjugatePoint(NumericalFailure):
    pass


# states
class NonUniformGrid(InvalidInput):
    pass


class AliasedGrid(InvalidInput):
    pass


class NonHermitian(InvalidInput):
    pass


class NonPositiveWidth(InvalidInput):
    pass


class NonPositiveParameter(InvalidInput):
    pass


class InadmissibleState(InvalidInput):
    pass


class NormalizationError(InvalidInput):
    pass


# propagation
class NonSymplecticMap(InvalidInput):
    pass


class DomainEscape(NumericalFailure):
    pass


class StabilityViolation(NumericalFailure):
    pass


# influence
class QuadratureUnderflow(NumericalFailure):
    pass


class DivergentIntegral(NumericalFailure):
    pass


# caldeira-leggett
class NegativeDuration(InvalidInput):
    pass


class UnstableStep(NumericalFailure):
    pass


class SeedRequired(InvalidInput):
    pass


class EmptyEnsemble(InvalidInput):
    pass


# cli / io
class ParseError(InvalidInput):
    pass


class SchemaError(InvalidInput):
    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
