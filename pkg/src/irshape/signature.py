"""Inner-center radius (IR) and arc-length XY contour signatures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import CenterOutside, InvalidContour
from .geometry import (
    Point,
    as_contour,
    as_mask,
    dilate,
    distance_transform,
    label_components,
    trace_contour,
)

# ray-march step in pixels
RAY_STEP = 0.25
DEFAULT_TAU = math.pi / 180


def angle_count(tau: float) -> int:
    """Number of samples for angular step ``tau``; ``tau`` must divide 2*pi."""
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError(f"tau must be positive and finite, got {tau}")
    n = round(2 * math.pi / tau)
    if n < 1 or abs(n * tau - 2 * math.pi) > 1e-9:
        raise ValueError(f"tau={tau!r} does not divide 2*pi")
    return n


def uniform_angles(n: int) -> np.ndarray:
    """``n`` angles ``j * 2pi/n`` in ``[0, 2pi)``."""
    return np.arange(n) * (2 * math.pi / n)


@dataclass(frozen=True)
class RadialSignature:
    center: Point
    radii: np.ndarray
    tau: float

    def __post_init__(self):
        radii = np.array(self.radii, dtype=np.float64)
        n = angle_count(self.tau)
        if radii.shape != (n,):
            raise ValueError(f"expected {n} radii for tau={self.tau}, got {radii.shape}")
        if not np.isfinite(radii).all() or (radii < 0).any():
            raise ValueError("radii must be finite and non-negative")
        radii.setflags(write=False)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "center", Point(float(self.center[0]), float(self.center[1])))

    @property
    def n(self) -> int:
        return len(self.radii)

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.n) * self.tau

    def to_json(self) -> str:
        return json.dumps({"center": list(self.center), "tau": self.tau,
                           "radii": self.radii.tolist()})

    @classmethod
    def from_json(cls, text: str) -> RadialSignature:
        d = json.loads(text)
        return cls(Point(*d["center"]), np.asarray(d["radii"]), float(d["tau"]))


@dataclass(frozen=True)
class XYSignature:
    """Contour points resampled by arc length, relative to ``center``."""

    center: Point
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise ValueError(f"XY signature needs (n >= 3, 2) points, got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "center", Point(float(self.center[0]), float(self.center[1])))

    @property
    def n(self) -> int:
        return len(self.points)

    def to_json(self) -> str:
        return json.dumps({"center": list(self.center), "points": self.points.tolist()})

    @classmethod
    def from_json(cls, text: str) -> XYSignature:
        d = json.loads(text)
        return cls(Point(*d["center"]), np.asarray(d["points"]))


@dataclass(frozen=True)
class Completion:
    """Result of :func:`complete_disconnected`.

    ``mask`` is the input, untouched.  ``support`` is the single-component
    mask the contour was traced from (the input itself when it was already
    connected, otherwise its dilation), and ``rounds`` the number of 3x3
    dilations that took.
    """

    mask: np.ndarray
    contour: np.ndarray
    support: np.ndarray
    rounds: int


def inner_center(mask) -> Point:
    """Center of the foreground pixel farthest from the background.

    Ties go to the first pixel in row-major order.
    """
    dt = distance_transform(mask)
    y, x = np.unravel_index(int(np.argmax(dt)), dt.shape)
    return Point(x + 0.5, y + 0.5)


def complete_disconnected(mask) -> Completion:
    """Merge separated parts of an object by dilating until they touch."""
    m = as_mask(mask)
    support = m
    _, n = label_components(support)
    rounds = 0
    while n > 1:
        support = dilate(support)
        rounds += 1
        _, n = label_components(support)
    (contour,) = trace_contour(support)
    return Completion(m, contour, support, rounds)


def _on_foreground(mask: np.ndarray, center) -> bool:
    ix, iy = math.floor(center[0]), math.floor(center[1])
    h, w = mask.shape
    return 0 <= ix < w and 0 <= iy < h and bool(mask[iy, ix])


def sample_ir(mask, center, tau: float = DEFAULT_TAU, *,
              require_inside: bool = True) -> RadialSignature:
    """Cast rays from ``center`` every ``tau`` radians and keep the farthest exit.

    Each ray is marched in RAY_STEP increments; the radius is the midpoint
    between the last foreground sample and the background sample after it.
    Pass ``require_inside=False`` for a center taken from a dilated mask, in
    which case rays that meet no foreground get radius 0.
    """
    m = as_mask(mask)
    inside = _on_foreground(m, center)
    if require_inside and not inside:
        raise CenterOutside(f"center {tuple(center)} is not on a foreground pixel")
    n = angle_count(tau)
    thetas = np.arange(n) * tau
    h, w = m.shape
    cx, cy = float(center[0]), float(center[1])
    reach = math.hypot(max(cx, w - cx), max(cy, h - cy)) + 2 * RAY_STEP
    ts = np.arange(0.0, reach, RAY_STEP)

    ix = np.floor(cx + np.cos(thetas)[:, None] * ts).astype(np.intp)
    iy = np.floor(cy + np.sin(thetas)[:, None] * ts).astype(np.intp)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    hit = np.zeros(ix.shape, dtype=bool)
    hit[valid] = m[iy[valid], ix[valid]]

    any_hit = hit.any(axis=1)
    last = hit.shape[1] - 1 - np.argmax(hit[:, ::-1], axis=1)
    radii = np.where(any_hit, ts[last] + RAY_STEP / 2, 0.0)
    if inside and not any_hit.all():  # pragma: no cover - t=0 sample is foreground
        raise RuntimeError("ray from an interior center met no foreground")
    return RadialSignature(Point(cx, cy), radii, tau)


def sample_xy(contour, center, n: int) -> XYSignature:
    """Resample ``contour`` to ``n`` points equally spaced by arc length.

    Sampling starts at the vertex with the smallest polar angle about
    ``center`` (angles taken in ``[0, 2pi)``) and follows the vertex order.
    """
    if n < 3:
        raise ValueError(f"n must be at least 3, got {n}")
    pts = as_contour(contour)
    cx, cy = float(center[0]), float(center[1])
    ang = np.mod(np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx), 2 * math.pi)
    pts = np.roll(pts, -int(np.argmin(ang)), axis=0)
    closed = np.vstack([pts, pts[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))])
    if s[-1] <= 0:
        raise InvalidContour("contour has zero perimeter")
    t = s[-1] * np.arange(n) / n
    out = np.column_stack([np.interp(t, s, closed[:, 0]) - cx,
                           np.interp(t, s, closed[:, 1]) - cy])
    return XYSignature(Point(cx, cy), out)


def reconstruct_from_ir(sig: RadialSignature) -> np.ndarray:
    """Polygon ``center + r_j (cos t_j, sin t_j)``; may be degenerate."""
    th = sig.thetas
    return np.column_stack([sig.center.x + sig.radii * np.cos(th),
                            sig.center.y + sig.radii * np.sin(th)])


def reconstruct_from_xy(sig: XYSignature) -> np.ndarray:
    return sig.points + np.asarray(sig.center)


def bbox_diagonal(mask) -> float:
    """Diagonal of the foreground bounding box, in pixels."""
    ys, xs = np.nonzero(as_mask(mask))
    return math.hypot(xs.max() - xs.min() + 1, ys.max() - ys.min() + 1)
