"""Exception hierarchy.

Two families matter to callers: :class:`InputError` for malformed data or
files (CLI exit code 2) and :class:`AlgorithmError` for numerical failures
(CLI exit code 3).
"""


class MweicaError(Exception):
    """Base class for every error raised by this package."""


class InputError(MweicaError, ValueError):
    """Invalid input data, shapes or files."""


class AlgorithmError(MweicaError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""


# -- input / validation -----------------------------------------------------

class ParseError(InputError):
    pass


class RaggedRows(InputError):
    pass


class UnsupportedFormat(InputError):
    pass


class CorruptHeader(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class EmptyColumn(InputError):
    pass


class ZeroVector(InputError):
    pass


class MismatchedTrialSets(InputError):
    pass


# -- numerical ---------------------------------------------------------------

class DegenerateData(AlgorithmError):
    pass


class SingularWeightCovariance(AlgorithmError):
    pass


class WeightUnderflow(AlgorithmError):
    pass


class NotPositiveDefinite(AlgorithmError):
    pass


class ZeroMatrix(AlgorithmError):
    pass


class SingularMatrix(AlgorithmError):
    pass


class TooFewValidWeightPoints(AlgorithmError):
    pass


class ZeroVarianceSource(AlgorithmError):
    pass


class RetryExhausted(AlgorithmError):
    pass


class NearDegenerateSpectrum(UserWarning):
    """Warning: the separating directions are not uniquely determined."""
