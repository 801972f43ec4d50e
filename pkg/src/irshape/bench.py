"""Off-line analyses over shape corpora: reconstruction error sweeps,
coefficient noise sensitivity and coefficient statistics.

CSV schemas (floats written with 17 significant digits):

sweep
    signature,basis,dim,N,E_recon,shapes,failed
sensitivity
    basis,l,index,name,kbar,alpha,delta_E_recon,trials,shapes,flagged
stats
    basis,l,index,name,mean,variance,min,max  (index ``all`` pools every coefficient)
histogram
    basis,l,index,bin_left,bin_right,count
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .approx import BasisKind, coefficient_names, evaluate, fit_xy
from .codec import DecodeBatch, ShapeVector, decode_batch, decode_one, encode
from .errors import IngestError, ShapeError
from .geometry import as_mask, iou, is_degenerate, rasterize
from .signature import (
    DEFAULT_TAU,
    complete_disconnected,
    inner_center,
    reconstruct_from_ir,
    reconstruct_from_xy,
    sample_ir,
    sample_xy,
    uniform_angles,
)

log = logging.getLogger(__name__)

STAR_SHAPED_KINDS = ("disc", "ellipse", "rect", "star", "blob")
HARD_KINDS = ("lshape", "crescent")
PRESETS = {
    "mixed": STAR_SHAPED_KINDS,
    "hard": HARD_KINDS,
    "all": STAR_SHAPED_KINDS + HARD_KINDS,
}
DEFAULT_ALPHAS = (0.0, 0.05, 0.1, 0.2, 0.4)
DEFAULT_TRIALS = 20
DEFAULT_BINS = 20


@dataclass
class ShapeCorpus:
    ids: list[str]
    masks: list[np.ndarray]
    source: str
    skipped: int = 0
    # generator parameters per shape, when synthetic
    params: list[dict] | None = None

    def __post_init__(self):
        if len(self.ids) != len(self.masks):
            raise ValueError("ids and masks differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("corpus ids must be unique")
        self.masks = [as_mask(m) for m in self.masks]
        for i, m in zip(self.ids, self.masks):
            if not m.any():
                raise ValueError(f"corpus shape {i!r} is empty")

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(zip(self.ids, self.masks))


# -- synthetic shapes -------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    kinds: tuple[str, ...] = STAR_SHAPED_KINDS
    size: int = 64

    def __post_init__(self):
        if not self.kinds:
            raise ValueError("generator needs at least one shape kind")
        unknown = set(self.kinds) - set(_GENERATORS)
        if unknown:
            raise ValueError(f"unknown shape kinds: {', '.join(sorted(unknown))}")
        if self.size < 16:
            raise ValueError(f"raster size must be >= 16, got {self.size}")

    @classmethod
    def parse(cls, text: str, size: int = 64) -> GeneratorSpec:
        """``mixed``, ``hard``, ``all`` or a comma list such as ``disc,star``."""
        text = text.strip()
        if text in PRESETS:
            return cls(PRESETS[text], size)
        return cls(tuple(k.strip() for k in text.split(",") if k.strip()), size)


def _rotate(xy, phi):
    c, s = math.cos(phi), math.sin(phi)
    return xy @ np.array([[c, s], [-s, c]])


def _radial_polygon(r, center):
    th = uniform_angles(len(r))
    return np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)])


def _disc(rng, S, c):
    r = rng.uniform(0.15, 0.4) * S
    return rasterize(_radial_polygon(np.full(720, r), c), S, S), {"radius": r}


def _ellipse(rng, S, c):
    a = rng.uniform(0.2, 0.42) * S
    b = a * rng.uniform(0.35, 0.9)
    th = uniform_angles(720)
    phi = rng.uniform(0, math.pi)
    xy = _rotate(np.column_stack([a * np.cos(th), b * np.sin(th)]), phi)
    return rasterize(xy + c, S, S), {"a": a, "b": b, "angle": phi}


def _rect(rng, S, c):
    a = rng.uniform(0.15, 0.4) * S
    b = a * rng.uniform(0.3, 1.0)
    shrink = min(1.0, 0.42 * S / math.hypot(a, b))
    a, b = a * shrink, b * shrink
    xy = np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
    phi = rng.uniform(0, math.pi)
    return rasterize(_rotate(xy, phi) + c, S, S), {"a": a, "b": b, "angle": phi}


def _star(rng, S, c):
    k = int(rng.integers(3, 13))
    outer = rng.uniform(0.25, 0.42) * S
    inner = outer * rng.uniform(0.45, 0.8)
    r = np.tile([outer, inner], k)
    th = np.arange(2 * k) * (math.pi / k) + rng.uniform(0, 2 * math.pi / k)
    xy = np.column_stack([r * np.cos(th), r * np.sin(th)])
    return rasterize(xy + c, S, S), {"spikes": k, "outer": outer, "inner": inner}


def _blob(rng, S, c):
    base = rng.uniform(0.2, 0.34) * S
    th = uniform_angles(360)
    r = np.ones_like(th)
    for h in range(2, 6):
        r += rng.uniform(0, 0.25 / h) * np.cos(h * th + rng.uniform(0, 2 * math.pi))
    return rasterize(_radial_polygon(base * r, c), S, S), {"radius": base}


def _lshape(rng, S, c):
    w = rng.uniform(0.5, 0.8) * S
    h = rng.uniform(0.5, 0.8) * S
    t = rng.uniform(0.25, 0.45) * min(w, h)
    xy = np.array([[0, 0], [w, 0], [w, t], [t, t], [t, h], [0, h]]) - [w / 2, h / 2]
    phi = rng.uniform(0, 2 * math.pi)
    return rasterize(_rotate(xy, phi) + c, S, S), {"w": w, "h": h, "t": t, "angle": phi}


def _crescent(rng, S, c):
    R = rng.uniform(0.28, 0.42) * S
    r = R * rng.uniform(0.6, 0.9)
    phi = rng.uniform(0, 2 * math.pi)
    off = (R - r) + r * rng.uniform(0.3, 0.7)
    outer = rasterize(_radial_polygon(np.full(720, R), c), S, S)
    c2 = (c[0] + off * math.cos(phi), c[1] + off * math.sin(phi))
    bite = rasterize(_radial_polygon(np.full(720, r), c2), S, S)
    return outer & ~bite, {"outer": R, "inner": r, "offset": off, "angle": phi}


_GENERATORS: dict[str, Callable] = {
    "disc": _disc, "ellipse": _ellipse, "rect": _rect, "star": _star,
    "blob": _blob, "lshape": _lshape, "crescent": _crescent,
}


def generate_synthetic(spec: GeneratorSpec | str = "mixed", count: int = 100,
                       seed: int = 0) -> ShapeCorpus:
    """Seeded corpus cycling through ``spec.kinds``.

    Each shape draws from its own generator spawned off ``seed``, so shape
    ``i`` is identical whatever ``count`` is.
    """
    if isinstance(spec, str):
        spec = GeneratorSpec.parse(spec)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    S = spec.size
    children = np.random.SeedSequence(seed).spawn(count)
    ids, masks, params = [], [], []
    for i, ss in enumerate(children):
        kind = spec.kinds[i % len(spec.kinds)]
        rng = np.random.default_rng(ss)
        c = S / 2 + rng.uniform(-0.05, 0.05, 2) * S
        mask, p = _GENERATORS[kind](rng, S, c)
        ids.append(f"{kind}-{i:05d}")
        masks.append(mask)
        params.append({"kind": kind, "center": (float(c[0]), float(c[1])), **p})
    return ShapeCorpus(ids, masks, f"synthetic:{','.join(spec.kinds)}:{S}:seed={seed}",
                       params=params)


# -- annotation ingestion ---------------------------------------------------

def _polygon_points(seg, where: str) -> np.ndarray:
    if not isinstance(seg, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                            for v in seg):
        raise IngestError(f"{where}: expected a flat list of numbers")
    if len(seg) % 2:
        raise IngestError(f"{where}: odd number of coordinates ({len(seg)})")
    return np.asarray(seg, dtype=np.float64).reshape(-1, 2)


def ingest_polygons(path) -> ShapeCorpus:
    """Load COCO-style polygon annotations, one mask per annotation.

    Each object's polygons are rasterized together into its bounding box
    plus a 2-pixel margin.  Polygons with fewer than 3 points or zero area,
    and RLE segmentations, are skipped and counted in ``corpus.skipped``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    anns = doc.get("annotations") if isinstance(doc, dict) else None
    if not isinstance(anns, list):
        raise IngestError(f"{path}: missing list field 'annotations'")

    ids, masks, skipped = [], [], 0
    for k, ann in enumerate(anns):
        where = f"{path}: annotations[{k}]"
        if not isinstance(ann, dict) or "segmentation" not in ann:
            raise IngestError(f"{where}: expected an object with a 'segmentation' field")
        seg = ann["segmentation"]
        if isinstance(seg, dict):
            skipped += 1
            continue
        if not isinstance(seg, list):
            raise IngestError(f"{where}.segmentation: expected a list of polygons")
        polys = []
        for j, part in enumerate(seg):
            pts = _polygon_points(part, f"{where}.segmentation[{j}]")
            if len(pts) < 3 or is_degenerate(pts) or not np.isfinite(pts).all():
                skipped += 1
                continue
            polys.append(pts)
        if not polys:
            continue
        allpts = np.vstack(polys)
        x0, y0 = np.floor(allpts.min(axis=0)) - 2
        x1, y1 = np.ceil(allpts.max(axis=0)) + 2
        w, h = int(x1 - x0), int(y1 - y0)
        mask = np.zeros((h, w), dtype=bool)
        for pts in polys:
            mask |= rasterize(pts - [x0, y0], w, h)
        if not mask.any():
            skipped += 1
            continue
        ann_id = str(ann.get("id", k))
        if ann_id in ids:
            raise IngestError(f"{where}: duplicate id {ann_id!r}")
        ids.append(ann_id)
        masks.append(mask)
    if skipped:
        log.warning("%s: skipped %d degenerate or unsupported segmentations", path, skipped)
    return ShapeCorpus(ids, masks, f"annotations:{path}", skipped)


# -- reconstruction error ---------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    signature: str
    basis: str
    dim: int
    N: int
    e_recon: float
    shapes: int
    failed: int


@dataclass
class EvalReport:
    """Per-shape IoU for one configuration; ``e_recon == 1 - miou``."""

    config: dict
    ious: dict[str, float] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def miou(self) -> float:
        return math.fsum(self.ious.values()) / len(self.ious) if self.ious else 0.0

    @property
    def e_recon(self) -> float:
        return 1.0 - self.miou


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _ir_fitted_contour(mask, basis, dim, n_points):
    sv = encode(mask, basis, dim, 2 * math.pi / n_points)
    return decode_one(sv, n_points)


def _ir_raw_contour(mask, dim):
    comp = complete_disconnected(mask)
    center = inner_center(comp.support)
    sig = sample_ir(comp.mask, center, 2 * math.pi / dim, require_inside=comp.rounds == 0)
    return reconstruct_from_ir(sig)


def _xy_contour(mask, dim, n_points, fitted):
    comp = complete_disconnected(mask)
    center = inner_center(comp.support)
    if not fitted:
        return reconstruct_from_xy(sample_xy(comp.contour, center, dim // 2))
    xy = sample_xy(comp.contour, center, n_points)
    cx, cy = fit_xy(xy, dim // 2)
    th = uniform_angles(n_points)
    return np.column_stack([evaluate(cx, th), evaluate(cy, th)]) + np.asarray(center)


def sweep_configs(signatures: Sequence[str], dims: Sequence[int],
                  basis: BasisKind | str | None, n_points: int) -> list[dict]:
    """Expand the (signature x dim) product into configuration dicts.

    ``basis=None`` compares raw signatures: IR with ``dim`` rays against XY
    with ``dim/2`` points.  Otherwise IR is fitted in ``basis`` with ``dim``
    coefficients and XY by two Chebyshev fits of ``dim/2`` each, both from
    ``n_points`` samples.
    """
    basis = None if basis is None else BasisKind.parse(basis)
    out = []
    for dim in dims:
        for sig in signatures:
            sig = sig.upper()
            if sig not in ("IR", "XY"):
                raise ValueError(f"unknown signature {sig!r}")
            if sig == "XY" and (dim % 2 or dim < 6):
                raise ValueError(f"XY needs an even dim >= 6, got {dim}")
            if basis is None:
                b, n = "none", (dim if sig == "IR" else dim // 2)
            else:
                b = basis.value if sig == "IR" else BasisKind.CHEBYSHEV.value
                n = n_points
            out.append({"signature": sig, "basis": b, "dim": int(dim), "N": int(n)})
    return out


def _reconstruct(mask, cfg, n_points) -> np.ndarray:
    fitted = cfg["basis"] != "none"
    if cfg["signature"] == "IR":
        if fitted:
            return _ir_fitted_contour(mask, cfg["basis"], cfg["dim"], n_points)
        return _ir_raw_contour(mask, cfg["dim"])
    return _xy_contour(mask, cfg["dim"], n_points, fitted)


def evaluate_config(corpus: ShapeCorpus, cfg: dict, n_points: int = 360,
                    threads: int = 1) -> EvalReport:
    """Reconstruct every shape under ``cfg`` and score it against its mask."""
    def one(item):
        sid, mask = item
        try:
            contour = _reconstruct(mask, cfg, n_points)
            h, w = mask.shape
            return sid, iou(rasterize(contour, w, h), mask), None
        except (ShapeError, ValueError) as exc:
            return sid, None, f"{type(exc).__name__}: {exc}"

    report = EvalReport(dict(cfg))
    for sid, score, err in _map(one, list(corpus), threads):
        if err is None:
            report.ious[sid] = score
        else:
            report.failures[sid] = err
    return report


def recon_error_sweep(corpus: ShapeCorpus, signatures: Sequence[str] = ("IR", "XY"),
                      dims: Iterable[int] = (), basis: BasisKind | str | None = None,
                      n_points: int = 360, threads: int = 1) -> list[SweepRow]:
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    rows = []
    for cfg in sweep_configs(signatures, list(dims), basis, n_points):
        rep = evaluate_config(corpus, cfg, n_points, threads)
        if rep.failures:
            log.warning("%s: %d shapes failed", cfg, len(rep.failures))
        rows.append(SweepRow(cfg["signature"], cfg["basis"], cfg["dim"], cfg["N"],
                             rep.e_recon, len(rep.ious), len(rep.failures)))
    return rows


# -- sensitivity ------------------------------------------------------------

@dataclass
class SensitivityReport:
    basis: BasisKind
    l: int
    alphas: list[float]
    indices: list[int]
    names: list[str]
    kbar: np.ndarray           # corpus mean of each coefficient index
    delta: np.ndarray          # (len(indices), len(alphas)) mean increase in E_recon
    trials: int
    shapes: int
    flagged: list[int]         # indices whose mean is 0, so the noise is 0

    def delta_for(self, name: str, alpha: float) -> float:
        return float(self.delta[self.names.index(name), self.alphas.index(alpha)])


def sensitivity_sweep(corpus: ShapeCorpus, basis: BasisKind | str = BasisKind.CHEBYSHEV,
                      l: int = 8, alphas: Sequence[float] = DEFAULT_ALPHAS,
                      trials: int = DEFAULT_TRIALS, seed: int = 0, *,
                      n_points: int = 360, tau: float = DEFAULT_TAU,
                      threads: int = 1) -> SensitivityReport:
    """Perturb one coefficient at a time with N(0, alpha*|kbar_i|) noise.

    ``kbar_i`` is the corpus mean of coefficient ``i``.  For each shape the
    standard-normal draws are shared across alphas, so each curve is
    computed from the same noise directions.  The pinned omega of the fixed
    Fourier layout is not perturbed.
    """
    basis = BasisKind.parse(basis)
    alphas = [float(a) for a in alphas]
    if l < 1 or trials < 1:
        raise ValueError("l and trials must be >= 1")
    if any(b <= a for a, b in zip(alphas, alphas[1:])) or any(a < 0 for a in alphas):
        raise ValueError("alphas must be non-negative and strictly increasing")
    if len(corpus) == 0:
        raise ValueError("empty corpus")

    vectors = _map(lambda item: encode(item[1], basis, l, tau), list(corpus), threads)
    kbar = np.array([math.fsum(col) / len(vectors)
                     for col in np.stack([v.coeffs.coeffs for v in vectors]).T])
    indices = [i for i in range(l) if not (basis is BasisKind.FOURIER_FIXED and i == 0)]
    names = coefficient_names(basis, l)
    flagged = [i for i in indices if kbar[i] == 0]
    scales = np.abs(kbar)
    streams = np.random.SeedSequence(seed).spawn(len(vectors))

    def one(k):
        mask, sv = corpus.masks[k], vectors[k]
        h, w = mask.shape
        z = np.random.default_rng(streams[k]).standard_normal((len(indices), trials))
        base = iou(rasterize(decode_one(sv, n_points), w, h), mask)
        rows = []
        for ii, idx in enumerate(indices):
            for a in alphas:
                c = np.repeat(sv.coeffs.coeffs[None, :], trials, axis=0)
                c[:, idx] += a * scales[idx] * z[ii]
                rows.append(c)
        coeffs = np.concatenate(rows)
        batch = DecodeBatch.from_vectors([sv], n_points)
        batch = DecodeBatch(basis, np.broadcast_to(batch.thetas[0], (len(coeffs), n_points)),
                            coeffs, np.broadcast_to(batch.centers[:1], (len(coeffs), 2, n_points)),
                            np.full(len(coeffs), batch.scales[0]))
        out = decode_batch(batch).output
        drops = np.array([base - iou(rasterize(p.T, w, h), mask) for p in out])
        return drops.reshape(len(indices), len(alphas), trials).mean(axis=2)

    per_shape = _map(one, range(len(vectors)), threads)
    delta = np.mean(np.stack(per_shape), axis=0)
    return SensitivityReport(basis, l, alphas, indices, [names[i] for i in indices],
                             kbar[indices], delta, trials, len(vectors), flagged)


# -- coefficient statistics -------------------------------------------------

@dataclass
class CoefficientStats:
    basis: BasisKind
    l: int
    names: list[str]
    mean: np.ndarray
    variance: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    overall_mean: float
    overall_variance: float
    hist_edges: list[np.ndarray]
    hist_counts: list[np.ndarray]


def _mean_var(x) -> tuple[float, float]:
    # fsum keeps both statistics independent of corpus order
    x = np.asarray(x, dtype=np.float64).ravel()
    mean = math.fsum(x) / len(x)
    return mean, math.fsum((x - mean) ** 2) / len(x)


def coefficient_stats(corpus: ShapeCorpus, basis: BasisKind | str = BasisKind.CHEBYSHEV,
                      l: int = 20, *, bins: int = DEFAULT_BINS, tau: float = DEFAULT_TAU,
                      threads: int = 1, vectors: Sequence[ShapeVector] | None = None
                      ) -> CoefficientStats:
    """Per-index mean, population variance and fixed-bin histogram."""
    basis = BasisKind.parse(basis)
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if vectors is None:
        vectors = _map(lambda item: encode(item[1], basis, l, tau), list(corpus), threads)
    C = np.stack([v.coeffs.coeffs for v in vectors])
    means, vars_, edges, counts = [], [], [], []
    for col in C.T:
        m, v = _mean_var(col)
        means.append(m)
        vars_.append(v)
        cnt, e = np.histogram(col, bins=bins, range=(col.min(), col.max()))
        edges.append(e)
        counts.append(cnt)
    om, ov = _mean_var(C)
    return CoefficientStats(basis, l, coefficient_names(basis, l), np.array(means),
                            np.array(vars_), C.min(axis=0), C.max(axis=0), om, ov,
                            edges, counts)


# -- CSV ----------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return _csv(["signature", "basis", "dim", "N", "E_recon", "shapes", "failed"],
                ((r.signature, r.basis, r.dim, r.N, r.e_recon, r.shapes, r.failed)
                 for r in rows))


def sensitivity_csv(rep: SensitivityReport) -> str:
    rows = []
    for ii, (idx, name) in enumerate(zip(rep.indices, rep.names)):
        for ai, a in enumerate(rep.alphas):
            rows.append((rep.basis.value, rep.l, idx, name, rep.kbar[ii], a,
                         rep.delta[ii, ai], rep.trials, rep.shapes,
                         int(idx in rep.flagged)))
    return _csv(["basis", "l", "index", "name", "kbar", "alpha", "delta_E_recon",
                 "trials", "shapes", "flagged"], rows)


def stats_csv(st: CoefficientStats) -> str:
    rows = [(st.basis.value, st.l, i, st.names[i], st.mean[i], st.variance[i],
             st.minimum[i], st.maximum[i]) for i in range(st.l)]
    rows.append((st.basis.value, st.l, "all", "all", st.overall_mean, st.overall_variance,
                 float(st.minimum.min()), float(st.maximum.max())))
    return _csv(["basis", "l", "index", "name", "mean", "variance", "min", "max"], rows)


def histogram_csv(st: CoefficientStats) -> str:
    rows = []
    for i, (e, c) in enumerate(zip(st.hist_edges, st.hist_counts)):
        for k in range(len(c)):
            rows.append((st.basis.value, st.l, i, float(e[k]), float(e[k + 1]), int(c[k])))
    return _csv(["basis", "l", "index", "bin_left", "bin_right", "count"], rows)


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
