"""Exception taxonomy shared across the package."""


class CountingError(Exception):
    """Base class for all errors raised by this library."""


class FormatError(CountingError):
    """File does not look like a CDFM feature file (bad magic or version)."""


class CorruptionError(CountingError):
    """CDFM header promises a different payload size than the file contains."""


class ValidationError(CountingError):
    """Data violates a structural invariant (non-finite values, bad dims, ...)."""


class ShapeError(CountingError):
    """Tensor dimensions are inconsistent between operands."""


class GeometryError(CountingError):
    """A box is degenerate or falls outside the usable grid."""


class DegenerateMapError(CountingError):
    """Similarity map is constant; min-max rescaling carries no signal."""


class DegenerateNormalizationError(CountingError):
    """Exemplar regions carry numerically zero response; the normalization
    factor is unusable."""


class EvaluationError(CountingError):
    """A benchmark run produced no usable per-image results."""
