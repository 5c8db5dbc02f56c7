"""Exception types shared across the package.

Filesystem problems surface as the built-in OSError family
(FileNotFoundError for missing paths); everything domain-specific
derives from ConvTraceError so callers can catch one base class.
"""


class ConvTraceError(Exception):
    """Base class for all convtrace errors."""


# imaging
class UnsupportedFormatError(ConvTraceError):
    """File is not a PNG or JPEG, or uses a pixel mode we cannot map to RGB."""


class CorruptImageError(ConvTraceError):
    """File exists but cannot be decoded."""


# em
class InvalidKernelSizeError(ConvTraceError):
    """Kernel size below 2."""


class PlaneTooSmallError(ConvTraceError):
    """Image plane smaller than the kernel window in some axis."""


class NonPositiveSigmaError(ConvTraceError):
    """sigma must be > 0 for the Gaussian likelihood."""


class SingularSystemError(ConvTraceError):
    """Weighted normal equations are numerically singular even after ridge."""


class InsufficientSupportError(ConvTraceError):
    """Too few pixels carry positive weight to determine the kernel."""


class ZeroWeightMassError(ConvTraceError):
    """Weight map sums to zero; sigma update undefined."""


class DegenerateInputError(ConvTraceError):
    """Constant plane: no pixel correlation to estimate."""


# features
class MixedKernelSizesError(ConvTraceError):
    """Channel estimates disagree on kernel size."""


class SchemaMismatchError(ConvTraceError):
    """Feature CSV malformed (bad header or wrong row arity)."""


class KernelSizeMissingError(ConvTraceError):
    """Feature CSV lacks the leading '# kernel_size=N' comment."""


class TooFewRecordsError(ConvTraceError):
    """Standardization needs at least two records."""


# classify
class KTooLargeError(ConvTraceError):
    """KNN k exceeds the number of training records."""


class EmptyTrainingSetError(ConvTraceError):
    """No training records."""


class DimensionMismatchError(ConvTraceError):
    """Feature dimension differs between model and query/test data."""


class SingularCovarianceError(ConvTraceError):
    """Pooled covariance not invertible with zero shrinkage."""


class ClassTooSmallError(ConvTraceError):
    """A class has too few records for the requested operation."""


class NotBinaryError(ConvTraceError):
    """Binary SVM fit called with a class count other than two."""


class NoConvergenceError(ConvTraceError):
    """SMO iteration cap reached before the KKT conditions held."""

    def __init__(self, message, duality_gap=None):
        super().__init__(message)
        self.duality_gap = duality_gap


class VersionMismatchError(ConvTraceError):
    """Model file carries an unknown format version."""


# synth
class UnstableSpecError(ConvTraceError):
    """Generative recursion diverged (most pixels saturated)."""


# harness
class EmptyClassError(ConvTraceError):
    """A corpus class directory contains no images."""


class DuplicatePathError(ConvTraceError):
    """The same image file was collected twice."""


class AllImagesFailedError(ConvTraceError):
    """Every extraction in the batch failed."""
