"""Exception hierarchy shared by all pipeline stages."""


class FoiError(Exception):
    """Base class for every error raised by the pipeline."""


class DimensionError(FoiError, ValueError):
    """Raster shapes that must agree do not."""


class ParameterError(FoiError, ValueError):
    """A numeric parameter is outside its allowed range."""


class GeometryError(FoiError, ValueError):
    """A window or rectangle does not fit the plane it is applied to."""


class IncompleteInputError(FoiError, ValueError):
    """Stitching or assembly is missing a required piece."""


class AnnotationParseError(FoiError, ValueError):
    """An annotation file does not match the expected schema."""


class AnnotationValidationError(FoiError, ValueError):
    """An annotation parsed correctly but lies outside the slide."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EmptyValidMaskError(FoiError):
    """No position survives the valid-mask constraint."""


class UndefinedCorrelationError(FoiError, ValueError):
    """Pearson correlation is undefined for the given series."""
