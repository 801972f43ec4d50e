"""Mask -> shape vector encoding and tensor-style decoding."""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .approx import (
    BasisKind,
    CoefficientVector,
    design_matrix,
    evaluate,
    fit,
)
from .errors import DimensionMismatch
from .geometry import Point
from .signature import (
    DEFAULT_TAU,
    RadialSignature,
    bbox_diagonal,
    complete_disconnected,
    inner_center,
    reconstruct_from_ir,
    sample_ir,
    uniform_angles,
)

DEFAULT_DIM = 20


@dataclass(frozen=True)
class ShapeVector:
    """Inner center plus fitted radius coefficients.

    When ``scale`` is set the coefficients describe radii divided by it.
    """

    center: Point
    coeffs: CoefficientVector
    scale: float | None = None
    id: str | None = field(default=None, compare=False)

    def __post_init__(self):
        c = Point(float(self.center[0]), float(self.center[1]))
        if not (math.isfinite(c.x) and math.isfinite(c.y)):
            raise ValueError("center must be finite")
        if self.scale is not None and not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "center", c)

    def to_dict(self) -> dict:
        d = {"center": [self.center.x, self.center.y], **self.coeffs.to_dict(),
             "scale": self.scale}
        if self.id is not None:
            d = {"id": self.id, **d}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ShapeVector:
        return cls(Point(*d["center"]), CoefficientVector.from_dict(d),
                   d.get("scale"), d.get("id"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ShapeVector:
        return cls.from_dict(json.loads(text))


def encode(mask, basis: BasisKind | str = BasisKind.CHEBYSHEV, l: int = DEFAULT_DIM,
           tau: float = DEFAULT_TAU, *, normalize: bool = False) -> ShapeVector:
    """Encode a mask: complete disconnected parts, find the inner center,
    sample the IR signature and fit it.

    The center comes from the completed (possibly dilated) mask while the
    radii are sampled on the original one.  With ``normalize`` the radii are
    divided by the foreground bounding-box diagonal before fitting.
    """
    comp = complete_disconnected(mask)
    center = inner_center(comp.support)
    sig = sample_ir(comp.mask, center, tau, require_inside=comp.rounds == 0)
    scale = None
    if normalize:
        scale = bbox_diagonal(comp.mask)
        sig = RadialSignature(sig.center, sig.radii / scale, sig.tau)
    return ShapeVector(center, fit(sig, basis, l), scale)


def decode_radii(sv: ShapeVector, thetas) -> np.ndarray:
    r = np.maximum(evaluate(sv.coeffs, thetas), 0.0)
    return r * sv.scale if sv.scale is not None else r


def decode_one(sv: ShapeVector, n_points: int = 360) -> np.ndarray:
    """Contour of ``n_points`` vertices at uniform angles; negative radii clamp to 0."""
    if n_points < 3:
        raise ValueError(f"n_points must be at least 3, got {n_points}")
    tau = 2 * math.pi / n_points
    radii = decode_radii(sv, uniform_angles(n_points))
    return reconstruct_from_ir(RadialSignature(sv.center, radii, tau))


@dataclass(frozen=True)
class DecodeBatch:
    """Arrays for decoding ``bs`` shapes at once.

    thetas: (bs, N) angles; coeffs: (bs, l) coefficient rows, all of one basis;
    centers: (bs, 2, N) centers broadcast along the angle axis; scales: (bs,)
    radius multipliers (1 when unnormalized); output: (bs, 2, N) after
    :func:`decode_batch`.
    """

    basis: BasisKind
    thetas: np.ndarray
    coeffs: np.ndarray
    centers: np.ndarray
    scales: np.ndarray
    output: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "basis", BasisKind.parse(self.basis))
        th, c, p, s = (np.asarray(a, dtype=np.float64)
                       for a in (self.thetas, self.coeffs, self.centers, self.scales))
        if th.ndim != 2 or c.ndim != 2 or p.ndim != 3 or s.ndim != 1:
            raise DimensionMismatch("expected thetas (bs,N), coeffs (bs,l), "
                                    "centers (bs,2,N), scales (bs,)")
        bs, n = th.shape
        if c.shape[0] != bs or p.shape != (bs, 2, n) or s.shape != (bs,):
            raise DimensionMismatch(
                f"inconsistent batch: thetas {th.shape}, coeffs {c.shape}, "
                f"centers {p.shape}, scales {s.shape}")
        for name, a in zip(("thetas", "coeffs", "centers", "scales"), (th, c, p, s)):
            object.__setattr__(self, name, a)

    @property
    def size(self) -> int:
        return self.thetas.shape[0]

    @classmethod
    def from_vectors(cls, vectors, n_points: int = 360) -> DecodeBatch:
        vectors = list(vectors)
        if not vectors:
            raise ValueError("empty batch")
        basis = vectors[0].coeffs.basis
        if any(v.coeffs.basis is not basis or len(v.coeffs) != len(vectors[0].coeffs)
               for v in vectors):
            raise DimensionMismatch("all shape vectors in a batch need the same basis and length")
        bs = len(vectors)
        thetas = np.broadcast_to(uniform_angles(n_points), (bs, n_points))
        coeffs = np.stack([v.coeffs.coeffs for v in vectors])
        centers = np.array([[v.center.x, v.center.y] for v in vectors])
        centers = np.broadcast_to(centers[:, :, None], (bs, 2, n_points))
        scales = np.array([1.0 if v.scale is None else v.scale for v in vectors])
        return cls(basis, thetas, coeffs, centers, scales)


@functools.lru_cache(maxsize=32)
def _shared_basis(basis: BasisKind, l: int, n: int, theta_bytes: bytes) -> np.ndarray:
    thetas = np.frombuffer(theta_bytes, dtype=np.float64)
    m = np.ascontiguousarray(design_matrix(basis, l, thetas).T)
    m.setflags(write=False)
    return m


def decode_batch(batch: DecodeBatch) -> DecodeBatch:
    """Decode every row with matrix products and elementwise ops only.

    When all rows share one angle grid (and omega is fixed), the ``(l, N)``
    basis matrix is built once and cached across calls.
    """
    basis, th, c = batch.basis, batch.thetas, batch.coeffs
    l = c.shape[1]
    shared = th.shape[0] > 0 and (th == th[:1]).all()
    if basis is BasisKind.FOURIER_FREE:
        # omega differs per shape, so each row gets its own basis
        T = design_matrix(basis, l, th, c[:, :1])
        radii = np.einsum("bnk,bk->bn", T, c[:, 1:])
    else:
        free = c[:, 1:] if basis.is_fourier else c
        if shared:
            T = _shared_basis(basis, l, th.shape[1], th[0].tobytes())
            radii = free @ T
        else:
            radii = np.einsum("bnk,bk->bn", design_matrix(basis, l, th), free)
    radii = np.maximum(radii, 0.0) * batch.scales[:, None]
    u = np.stack([np.cos(th), np.sin(th)], axis=1)
    return replace(batch, output=batch.centers + radii[:, None, :] * u)


def shape_loss(pred_center, pred_coeffs: CoefficientVector,
               gt_center, gt_coeffs: CoefficientVector) -> float:
    """Squared L2 norm of the center residual and coefficient residual, concatenated."""
    if pred_coeffs.basis is not gt_coeffs.basis or len(pred_coeffs) != len(gt_coeffs):
        raise DimensionMismatch(
            f"cannot compare {pred_coeffs.basis.value}[{len(pred_coeffs)}] "
            f"with {gt_coeffs.basis.value}[{len(gt_coeffs)}]")
    dp = np.subtract(pred_center, gt_center, dtype=np.float64)
    dk = pred_coeffs.coeffs - gt_coeffs.coeffs
    return float(dp @ dp + dk @ dk)

