"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Base class for invalid-shape and invalid-input conditions."""


class EmptyShape(ShapeError):
    """The mask has no foreground pixels."""


class InvalidContour(ShapeError):
    """Contour has too few vertices, repeated vertices or non-finite values."""


class CenterOutside(ShapeError):
    """A ray-casting origin does not lie on a foreground pixel."""


class DimensionMismatch(ShapeError):
    pass


class SingularFit(ShapeError):
    """The least-squares system could not be solved."""


class IngestError(ShapeError):
    """An annotation file could not be parsed."""
