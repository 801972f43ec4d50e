"""Explicit shape encoding: inner-center radius signatures fitted with
Chebyshev (or Fourier / monomial) series, plus batched decoding."""

__version__ = "0.1.0"

from .approx import BasisKind, CoefficientVector, chebyshev_T, evaluate, fit, fit_xy
from .codec import DecodeBatch, ShapeVector, decode_batch, decode_one, encode, shape_loss
from .errors import (
    CenterOutside,
    DimensionMismatch,
    EmptyShape,
    IngestError,
    InvalidContour,
    ShapeError,
    SingularFit,
)
from .geometry import Point, distance_transform, iou, rasterize, trace_contour
from .signature import (
    RadialSignature,
    XYSignature,
    complete_disconnected,
    inner_center,
    reconstruct_from_ir,
    sample_ir,
    sample_xy,
)
