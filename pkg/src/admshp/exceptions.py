"""Exception hierarchy.

Validation problems derive from ``ValueError``; numerical failures derive
from ``ArithmeticError``. Everything derives from ``ShrinkageError`` so a
caller can catch the whole family at once.
"""


class ShrinkageError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(ShrinkageError, ValueError):
    """The data violate a structural invariant of the two-level model."""


class NonPositiveVariance(DatasetError):
    pass


class TooFewGroups(DatasetError):
    pass


class RankDeficientDesign(DatasetError):
    pass


class DimensionMismatch(DatasetError):
    pass


class NonFiniteValue(DatasetError):
    pass


class UnequalVariances(DatasetError):
    pass


class NotApplicable(DatasetError):
    """The requested rule degenerates for this configuration (e.g. James-Stein with k=2)."""


class ParameterError(ShrinkageError, ValueError):
    """An argument such as ``A`` or ``q`` is outside its domain."""


class NegativeA(ParameterError):
    pass


class NonPositiveA(ParameterError):
    pass


class BadQ(ParameterError):
    pass


class NumericalError(ShrinkageError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy answer."""


class SingularSystem(NumericalError):
    pass


class OptimizerFailure(NumericalError):
    pass


class NoInteriorMax(NumericalError):
    pass


class NonConcaveAtMode(NumericalError):
    pass


class NotProper(NumericalError):
    pass
