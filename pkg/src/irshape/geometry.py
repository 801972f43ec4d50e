"""Raster and vector primitives.

Masks are 2D boolean numpy arrays indexed ``mask[y, x]``; pixel ``(x, y)``
stands for the point ``(x + 0.5, y + 0.5)``.  Contours are ``(k, 2)`` float
arrays of ``(x, y)`` vertices, implicitly closed.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyShape, InvalidContour

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class Point(NamedTuple):
    x: float
    y: float


def as_mask(mask) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be a non-empty 2D array, got shape {m.shape}")
    return m


def _require_foreground(mask: np.ndarray) -> None:
    if not mask.any():
        raise EmptyShape("mask has no foreground pixels")


def as_contour(points) -> np.ndarray:
    """Validate and return a contour as a ``(k, 2)`` float64 array.

    Raises InvalidContour for fewer than three vertices, non-finite
    coordinates, or a vertex repeated consecutively (wrap-around included).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidContour(f"contour must have shape (k, 2), got {pts.shape}")
    if len(pts) < 3:
        raise InvalidContour(f"contour needs at least 3 vertices, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise InvalidContour("contour has non-finite coordinates")
    same = np.all(pts == np.roll(pts, -1, axis=0), axis=1)
    if same.any():
        raise InvalidContour(f"vertex {int(np.argmax(same))} is repeated consecutively")
    return pts


def polygon_area(points) -> float:
    """Signed shoelace area; positive for counter-clockwise in (x, y)."""
    p = np.asarray(points, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def is_degenerate(points) -> bool:
    """True when the polygon encloses zero area and would rasterize empty."""
    p = np.asarray(points, dtype=np.float64)
    return len(p) < 3 or polygon_area(p) == 0.0


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance from each foreground pixel to the background.

    Everything outside the frame counts as background, so a foreground pixel
    on the border is at distance 1.
    """
    m = as_mask(mask)
    _require_foreground(m)
    padded = np.pad(m, 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def rasterize(contour, width: int, height: int) -> np.ndarray:
    """Fill a polygon on a ``height x width`` grid with the even-odd rule.

    A pixel is foreground when its center is inside.  Centers lying exactly on
    an edge follow a top-left half-open rule: on a left or top edge they are
    inside, on a right or bottom edge outside.  Zero-area polygons yield an
    all-background mask (see :func:`is_degenerate`).  Consecutive repeated
    vertices are tolerated here; use :func:`as_contour` to reject them.
    """
    if width < 1 or height < 1:
        raise ValueError(f"raster size must be positive, got {width}x{height}")
    pts = np.asarray(contour, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise InvalidContour(f"contour must have shape (k >= 3, 2), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise InvalidContour("contour has non-finite coordinates")
    mask = np.zeros((height, width), dtype=bool)
    if is_degenerate(pts):
        return mask

    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    row_lo = max(int(np.floor(y0.min() - 0.5)), 0)
    row_hi = min(int(np.ceil(y0.max() - 0.5)) + 1, height)
    if row_lo >= row_hi:
        return mask
    yc = np.arange(row_lo, row_hi, dtype=np.float64)[:, None] + 0.5
    crosses = ((y0 <= yc) & (yc < y1)) | ((y1 <= yc) & (yc < y0))
    dy = np.where(y1 != y0, y1 - y0, 1.0)
    xi = x0 + (yc - y0) * (x1 - x0) / dy
    k = int(crosses.sum(axis=1).max())
    xi = np.sort(np.where(crosses, xi, np.inf), axis=1)[:, :k]
    xc = np.arange(width, dtype=np.float64) + 0.5
    if xi.size * width <= 1 << 22:
        n = np.count_nonzero(xi[:, None, :] <= xc[None, :, None], axis=2)
        mask[row_lo:row_hi] = (n & 1).astype(bool)
    else:
        for r, row in enumerate(xi):
            n = np.searchsorted(row, xc, side="right")
            mask[row_lo + r] = (n & 1).astype(bool)
    return mask


def rasterize_union(contours, width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for c in contours:
        mask |= rasterize(c, width, height)
    return mask


def iou(a, b) -> float:
    """Intersection over union of two equally sized masks (1.0 if both empty)."""
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def label_components(mask) -> tuple[np.ndarray, int]:
    """Label 8-connected foreground components, numbered in scan order."""
    labels, n = ndimage.label(as_mask(mask), structure=EIGHT_CONNECTED)
    return labels, int(n)


def dilate(mask, iterations: int = 1) -> np.ndarray:
    """3x3 morphological dilation, clipped to the frame."""
    return ndimage.binary_dilation(as_mask(mask), structure=EIGHT_CONNECTED,
                                   iterations=iterations)


# Right turn first, then straight, then left.  Taking the right turn at a
# pinch vertex keeps diagonally touching pixels on one boundary loop, which is
# what 8-connectivity requires.
def _turn_order(d):
    dx, dy = d
    return ((dy, -dx), (dx, dy), (-dy, dx))


def _boundary_loop(filled: np.ndarray) -> np.ndarray:
    p = np.pad(filled, 1, constant_values=False)
    inner = p[1:-1, 1:-1]
    ys, xs = np.nonzero(inner)
    # each missing 4-neighbour contributes one unit edge, interior on the left
    sides = (
        (~p[:-2, 1:-1], (0, 0), (1, 0)),   # toward y - 1
        (~p[1:-1, 2:], (1, 0), (1, 1)),    # toward x + 1
        (~p[2:, 1:-1], (1, 1), (0, 1)),    # toward y + 1
        (~p[1:-1, :-2], (0, 1), (0, 0)),   # toward x - 1
    )
    out: dict[tuple[int, int], list[tuple[int, int]]] = {}
    n_edges = 0
    for open_side, (sx, sy), (ex, ey) in sides:
        sel = open_side[ys, xs]
        for x, y in zip(xs[sel].tolist(), ys[sel].tolist()):
            out.setdefault((x + sx, y + sy), []).append((x + ex, y + ey))
            n_edges += 1

    start = min(out, key=lambda v: (v[1], v[0]))
    # the top-left vertex only has its edge toward +x
    nxt = out[start].pop(0)
    loop = [start]
    prev, cur = start, nxt
    used = 1
    while cur != start:
        loop.append(cur)
        d = (cur[0] - prev[0], cur[1] - prev[1])
        cands = out[cur]
        for t in _turn_order(d):
            target = (cur[0] + t[0], cur[1] + t[1])
            if target in cands:
                cands.remove(target)
                break
        else:  # pragma: no cover - boundary edges always form closed loops
            raise RuntimeError(f"boundary walk stuck at {cur}")
        prev, cur = cur, target
        used += 1
    if used != n_edges:  # pragma: no cover
        raise RuntimeError(f"outer boundary walk used {used} of {n_edges} edges")
    return _drop_collinear(np.asarray(loop, dtype=np.float64))


def _drop_collinear(v: np.ndarray) -> np.ndarray:
    d_in = v - np.roll(v, 1, axis=0)
    d_out = np.roll(v, -1, axis=0) - v
    cross = d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]
    dot = np.einsum("ij,ij->i", d_in, d_out)
    keep = (cross != 0) | (dot < 0)
    return v[keep]


def trace_contour(mask) -> list[np.ndarray]:
    """Outer boundary of every 8-connected component.

    Vertices sit on pixel corners and run counter-clockwise in (x, y)
    (positive shoelace area), starting at the component's top-left corner.
    Holes are filled before tracing, so rasterizing a returned contour gives
    back the component with its holes closed.
    """
    m = as_mask(mask)
    _require_foreground(m)
    labels, n = label_components(m)
    contours = []
    for k in range(1, n + 1):
        comp = ndimage.binary_fill_holes(labels == k)
        contours.append(_boundary_loop(comp))
    return contours
