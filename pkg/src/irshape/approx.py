"""Least-squares fits of periodic 1D signatures in Chebyshev, Fourier and
monomial bases.

Chebyshev and monomial terms are evaluated at ``x = theta/pi - 1`` so that
``[0, 2pi)`` lands in ``[-1, 1)``.  Fourier terms use ``theta`` directly.

Coefficient layouts:

* Chebyshev, monomial: ``(c_0, ..., c_{l-1})``
* Fourier: ``(omega, a_0, a_1..a_n, b_1..b_n)`` with ``l = 2n + 2``; the series
  is ``a_0/2 + sum_i a_i cos(i omega t) + b_i sin(i omega t)``.  For the fixed
  variant ``omega`` is stored but pinned to 1.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import SingularFit

RIDGE = 1e-10
OMEGA_BOUNDS = (1e-3, 4.0)
OMEGA_TOL = 1e-6
# coarse scan before golden-section refinement; the residual is multimodal in omega
OMEGA_SCAN_STEP = 0.05


class BasisKind(enum.Enum):
    CHEBYSHEV = "cheby"
    FOURIER_FREE = "fourier"
    FOURIER_FIXED = "fourier-fixed"
    MONOMIAL = "poly"

    @classmethod
    def parse(cls, name: str | BasisKind) -> BasisKind:
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {
            "cheby": cls.CHEBYSHEV, "chebyshev": cls.CHEBYSHEV,
            "fourier": cls.FOURIER_FREE, "fourier-free": cls.FOURIER_FREE,
            "fourier-fixed": cls.FOURIER_FIXED,
            "poly": cls.MONOMIAL, "monomial": cls.MONOMIAL, "polynomial": cls.MONOMIAL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown basis {name!r}; expected one of "
                             f"{', '.join(k.value for k in cls)}") from None

    @property
    def is_fourier(self) -> bool:
        return self in (BasisKind.FOURIER_FREE, BasisKind.FOURIER_FIXED)


def coefficient_names(basis: BasisKind, l: int) -> list[str]:
    if basis is BasisKind.CHEBYSHEV:
        return [f"c{i}" for i in range(l)]
    if basis is BasisKind.MONOMIAL:
        return [f"v{i}" for i in range(l)]
    n = (l - 2) // 2
    return (["omega", "a0"] + [f"a{i}" for i in range(1, n + 1)]
            + [f"b{i}" for i in range(1, n + 1)])


def check_length(basis: BasisKind, l: int) -> None:
    if l < 1:
        raise ValueError(f"coefficient count must be >= 1, got {l}")
    if basis.is_fourier and (l < 2 or l % 2):
        raise ValueError(f"Fourier layouts need an even length >= 2, got {l}")


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    basis: BasisKind
    coeffs: np.ndarray

    def __post_init__(self):
        basis = BasisKind.parse(self.basis)
        c = np.array(self.coeffs, dtype=np.float64)
        if c.ndim != 1:
            raise ValueError(f"coefficients must be 1D, got shape {c.shape}")
        check_length(basis, len(c))
        if not np.isfinite(c).all():
            raise ValueError("coefficients must be finite")
        if basis is BasisKind.FOURIER_FIXED and c[0] != 1.0:
            raise ValueError(f"fixed Fourier layout needs omega == 1, got {c[0]}")
        c.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "coeffs", c)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoefficientVector):
            return NotImplemented
        return self.basis is other.basis and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self) -> int:
        return hash((self.basis, self.coeffs.tobytes()))

    @property
    def omega(self) -> float:
        return float(self.coeffs[0]) if self.basis.is_fourier else 1.0

    def with_coefficient(self, index: int, value: float) -> CoefficientVector:
        c = self.coeffs.copy()
        c[index] = value
        return CoefficientVector(self.basis, c)

    def to_dict(self) -> dict:
        return {"basis": self.basis.value, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> CoefficientVector:
        return cls(BasisKind.parse(d["basis"]), np.asarray(d["coeffs"], dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> CoefficientVector:
        return cls.from_dict(json.loads(text))

    def to_bytes(self) -> bytes:
        """uint32 count followed by little-endian float64 coefficients."""
        return struct.pack(f"<I{len(self)}d", len(self), *self.coeffs)

    @classmethod
    def from_bytes(cls, data: bytes, basis: BasisKind | str) -> CoefficientVector:
        (n,) = struct.unpack_from("<I", data)
        if len(data) != 4 + 8 * n:
            raise ValueError(f"expected {4 + 8 * n} bytes for {n} coefficients, got {len(data)}")
        return cls(BasisKind.parse(basis), np.frombuffer(data, "<f8", n, 4).astype(np.float64))


def chebyshev_T(n: int, x):
    """First-kind Chebyshev polynomial ``T_n(x)`` by the three-term recurrence."""
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    x = np.asarray(x, dtype=np.float64)
    t_prev, t = np.ones_like(x), x
    if n == 0:
        return t_prev if t_prev.ndim else float(t_prev)
    for _ in range(n - 1):
        t_prev, t = t, 2 * x * t - t_prev
    return t if t.ndim else float(t)


def chebyshev_matrix(x, l: int) -> np.ndarray:
    """Columns ``T_0(x) .. T_{l-1}(x)``."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape + (l,))
    out[..., 0] = 1.0
    if l > 1:
        out[..., 1] = x
    for k in range(2, l):
        out[..., k] = 2 * x * out[..., k - 1] - out[..., k - 2]
    return out


def angle_to_unit(thetas) -> np.ndarray:
    return np.asarray(thetas, dtype=np.float64) / math.pi - 1.0


def design_matrix(basis: BasisKind, l: int, thetas, omega=1.0) -> np.ndarray:
    """Matrix of the free basis functions at ``thetas``.

    Shape ``thetas.shape + (l,)`` for polynomial bases and
    ``thetas.shape + (l - 1,)`` for Fourier (omega is not a linear term).
    ``omega`` may be an array broadcastable against ``thetas``.
    """
    basis = BasisKind.parse(basis)
    check_length(basis, l)
    th = np.asarray(thetas, dtype=np.float64)
    if basis is BasisKind.CHEBYSHEV:
        return chebyshev_matrix(angle_to_unit(th), l)
    if basis is BasisKind.MONOMIAL:
        return angle_to_unit(th)[..., None] ** np.arange(l)
    n = (l - 2) // 2
    phase = (np.asarray(omega, dtype=np.float64) * th)[..., None] * np.arange(1, n + 1)
    half = np.full(phase.shape[:-1] + (1,), 0.5)
    return np.concatenate([half, np.cos(phase), np.sin(phase)], axis=-1)


def free_coefficients(cv: CoefficientVector) -> np.ndarray:
    return cv.coeffs[1:] if cv.basis.is_fourier else cv.coeffs


def evaluate(cv: CoefficientVector, thetas) -> np.ndarray:
    """Value of the truncated series at each angle."""
    return design_matrix(cv.basis, len(cv), thetas, cv.omega) @ free_coefficients(cv)


def _solve(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    gram = A.T @ A
    gram[np.diag_indices_from(gram)] += RIDGE
    try:
        c = np.linalg.solve(gram, A.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularFit(str(exc)) from exc
    if not np.isfinite(c).all():
        raise SingularFit("least-squares solution is not finite")
    r = A @ c - y
    return c, float(r @ r)


def _golden(f, lo: float, hi: float, tol: float) -> float:
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (a + b) / 2


def fit_values(values, thetas, basis: BasisKind | str, l: int) -> CoefficientVector:
    """Least-squares fit of ``values`` sampled at ``thetas``.

    Solves the normal equations with a 1e-10 ridge on the diagonal.  The free
    Fourier variant also fits omega: a scan over OMEGA_BOUNDS picks the best
    grid point, then golden-section search refines it to OMEGA_TOL.
    """
    basis = BasisKind.parse(basis)
    check_length(basis, l)
    y = np.asarray(values, dtype=np.float64)
    th = np.asarray(thetas, dtype=np.float64)
    if l > len(y):
        raise ValueError(f"{l} coefficients from {len(y)} samples is underdetermined")
    if basis is not BasisKind.FOURIER_FREE:
        c, _ = _solve(design_matrix(basis, l, th), y)
        if basis is BasisKind.FOURIER_FIXED:
            c = np.concatenate([[1.0], c])
        return CoefficientVector(basis, c)

    def loss(w):
        try:
            return _solve(design_matrix(basis, l, th, w), y)[1]
        except SingularFit:
            return math.inf

    lo, hi = OMEGA_BOUNDS
    grid = OMEGA_SCAN_STEP * np.arange(1, round(hi / OMEGA_SCAN_STEP) + 1)
    losses = [loss(w) for w in grid]
    k = int(np.argmin(losses))
    w = _golden(loss, max(lo, grid[k] - OMEGA_SCAN_STEP),
                min(hi, grid[k] + OMEGA_SCAN_STEP), OMEGA_TOL)
    if loss(w) > losses[k]:
        w = float(grid[k])
    c, _ = _solve(design_matrix(basis, l, th, w), y)
    return CoefficientVector(basis, np.concatenate([[w], c]))


def fit(sig, basis: BasisKind | str, l: int) -> CoefficientVector:
    """Fit a :class:`~irshape.signature.RadialSignature`'s radii."""
    return fit_values(sig.radii, sig.thetas, basis, l)


def residual(cv: CoefficientVector, values, thetas) -> float:
    """Sum of squared errors of ``cv`` against samples."""
    r = evaluate(cv, thetas) - np.asarray(values, dtype=np.float64)
    return float(r @ r)


def fit_xy(sig, l_each: int) -> tuple[CoefficientVector, CoefficientVector]:
    """Independent Chebyshev fits of the x and y coordinates of an XY signature.

    The arc-length fraction ``j/n`` plays the role of the angle, so
    :func:`evaluate` on ``uniform_angles(n)`` gives the fitted points back.
    """
    pts = sig.points
    th = np.arange(len(pts)) * (2 * math.pi / len(pts))
    if np.ptp(pts[:, 0]) == 0 or np.ptp(pts[:, 1]) == 0:
        raise ValueError("XY signature is flat along one axis")
    return (fit_values(pts[:, 0], th, BasisKind.CHEBYSHEV, l_each),
            fit_values(pts[:, 1], th, BasisKind.CHEBYSHEV, l_each))
