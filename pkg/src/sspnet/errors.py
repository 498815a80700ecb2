"""Exception types raised across the package."""


class SspnetError(Exception):
    """Base class for all errors raised by sspnet."""


class ValidationError(SspnetError, ValueError):
    """Inputs are structurally invalid (shapes, labels, option values)."""


class DegeneratePredictorError(SspnetError, ValueError):
    """A predictor column has fewer than two distinct values."""


class DegenerateLabelsError(SspnetError, ValueError):
    """Binary response contains a single class."""


class DegenerateResponseError(SspnetError, ValueError):
    """Response carries no signal (lambda1_max is zero), no grid can be built."""


class SingularBlockError(SspnetError):
    """A block matrix could not be factored even after maximum jitter."""


class EmptyModelError(SspnetError):
    """An operation needs at least one active component but the model has none."""


class CsvFormatError(SspnetError, ValueError):
    """A CSV input file is malformed (missing header, non-numeric or empty cell)."""
