"""Command line interface.

Every long option can also come from a ``--config`` file of ``key = value``
lines or from an ``IRSHAPE_<KEY>`` environment variable.  Precedence is
command line, then environment, then config file, then built-in defaults.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import platform
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .approx import BasisKind
from .bench import (
    DEFAULT_ALPHAS,
    DEFAULT_BINS,
    DEFAULT_TRIALS,
    GeneratorSpec,
    coefficient_stats,
    generate_synthetic,
    histogram_csv,
    ingest_polygons,
    recon_error_sweep,
    sensitivity_csv,
    sensitivity_sweep,
    stats_csv,
    sweep_csv,
)
from .codec import DEFAULT_DIM, DecodeBatch, ShapeVector, decode_batch, decode_one, encode
from .errors import ShapeError
from .geometry import rasterize
from .io import atomic_write, contour_to_json, encode_pbm, read_mask
from .signature import DEFAULT_TAU, angle_count

ENV_PREFIX = "IRSHAPE_"
EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("irshape")


class UsageError(Exception):
    pass


def parse_tau(text: str) -> float:
    """Angle step: ``1deg``, ``0.5deg``, ``pi/180``, ``0.01rad`` or plain radians."""
    s = str(text).strip().lower().replace(" ", "")
    m = re.fullmatch(r"([0-9.eE+-]+)deg", s)
    if m:
        return math.radians(float(m.group(1)))
    m = re.fullmatch(r"(?:([0-9.eE+-]+)\*?)?pi(?:/([0-9.eE+-]+))?", s)
    if m:
        return float(m.group(1) or 1) * math.pi / float(m.group(2) or 1)
    return float(s.removesuffix("rad"))


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _raster(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(text))
    if not m:
        raise ValueError(f"expected WxH, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _basis_or_none(text: str):
    return None if str(text).lower() == "none" else BasisKind.parse(text)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _add_corpus(p):
    g = p.add_argument_group("corpus")
    g.add_argument("--synthetic", default="mixed",
                   help="generator kinds: mixed, hard, all, or a comma list (default mixed)")
    g.add_argument("--count", type=int, default=200)
    g.add_argument("--size", type=int, default=64, help="synthetic raster size")
    g.add_argument("--annotations", type=Path, default=None,
                   help="COCO-style polygon JSON; overrides --synthetic")
    g.add_argument("--seed", type=int, default=0)


def _add_fit(p, dim=DEFAULT_DIM):
    p.add_argument("--basis", type=BasisKind.parse, default=BasisKind.CHEBYSHEV,
                   help="cheby, fourier, fourier-fixed or poly")
    p.add_argument("--dim", type=int, default=dim, help="coefficient count l")
    p.add_argument("--tau", type=parse_tau, default=DEFAULT_TAU,
                   help="angle step, e.g. 1deg or pi/180")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-o", "--output", type=Path, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="irshape", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("encode", parents=[common], help="mask -> shape vector JSON")
    p.add_argument("--mask", type=Path, required=True, help="PBM or PNG mask")
    _add_fit(p)
    p.add_argument("--normalize", type=_bool, nargs="?", const=True, default=False)

    p = sub.add_parser("decode", parents=[common], help="shape vector(s) -> contour or mask")
    p.add_argument("--in", dest="input", type=Path, required=True,
                   help="shape vector JSON, or JSON lines for a batch")
    p.add_argument("--points", type=int, default=360)
    p.add_argument("--raster", type=_raster, default=None,
                   help="WxH; write PBM masks instead of contour JSON")

    p = sub.add_parser("sweep", parents=[common], help="reconstruction error table")
    _add_corpus(p)
    p.add_argument("--signatures", default="IR,XY")
    p.add_argument("--dims", type=_int_list, default=[8, 20, 40])
    p.add_argument("--basis", type=_basis_or_none, default=BasisKind.CHEBYSHEV,
                   help="fit basis, or none to compare raw signatures")
    p.add_argument("--points", type=int, default=360)

    p = sub.add_parser("sensitivity", parents=[common], help="coefficient noise sensitivity")
    _add_corpus(p)
    _add_fit(p, dim=8)
    p.add_argument("--alphas", type=_float_list, default=list(DEFAULT_ALPHAS))
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--points", type=int, default=360)

    p = sub.add_parser("stats", parents=[common], help="coefficient distribution statistics")
    _add_corpus(p)
    _add_fit(p)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--hist", type=Path, default=None, help="histogram CSV path")

    p = sub.add_parser("ingest", parents=[common],
                       help="COCO polygons -> JSON lines of shape vectors")
    p.add_argument("--annotations", type=Path, required=True)
    _add_fit(p)
    p.add_argument("--masks-dir", type=Path, default=None, help="also write each mask as PBM")
    return parser


def version_string() -> str:
    return (f"irshape {__version__} (python {platform.python_version()}, "
            f"numpy {np.__version__}, scipy {scipy.__version__})")


# -- configuration ------------------------------------------------------------

def _read_config(path: Path) -> dict[str, str]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string("[run]\n" + path.read_text(encoding="utf-8"))
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return {k.replace("-", "_"): v.strip().strip('"').strip("'") for k, v in cp["run"].items()}


def _apply_defaults(sub: argparse.ArgumentParser, values: dict[str, str],
                    origin: str, strict: bool) -> list[str]:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    errors, defaults = [], {}
    for key, raw in values.items():
        a = actions.get(key)
        if a is None:
            if strict:
                errors.append(f"{origin}: unknown option {key!r}")
            continue
        try:
            if a.type is not None:
                val = a.type(raw)
            elif a.const is not None or a.nargs == 0:
                val = _bool(raw)
            else:
                val = raw
        except (ValueError, TypeError) as exc:
            errors.append(f"{origin}: {key}: {exc}")
            continue
        defaults[key] = val
        a.required = False
    sub.set_defaults(**defaults)
    return errors


@dataclass
class RunConfig:
    command: str
    args: argparse.Namespace
    errors: list[str] = field(default_factory=list)

    def validate(self) -> None:
        a, e = self.args, self.errors
        if getattr(a, "threads", 1) < 1:
            e.append("--threads must be >= 1")
        if hasattr(a, "dim"):
            basis = getattr(a, "basis", None)
            if a.dim < 1:
                e.append("--dim must be >= 1")
            elif isinstance(basis, BasisKind) and basis.is_fourier and a.dim % 2:
                e.append(f"--dim must be even for {basis.value}")
        if hasattr(a, "tau"):
            try:
                n = angle_count(a.tau)
                if hasattr(a, "dim") and a.dim > n:
                    e.append(f"--dim {a.dim} exceeds the {n} angle samples")
            except ValueError as exc:
                e.append(f"--tau: {exc}")
        if getattr(a, "points", 3) < 3:
            e.append("--points must be >= 3")
        if self.command in ("sweep", "sensitivity", "stats") and a.annotations is None:
            if a.count < 1:
                e.append("--count must be >= 1")
            try:
                GeneratorSpec.parse(a.synthetic, a.size)
            except ValueError as exc:
                e.append(f"--synthetic: {exc}")
        if self.command == "sweep":
            sigs = [s.strip().upper() for s in a.signatures.split(",") if s.strip()]
            bad = [s for s in sigs if s not in ("IR", "XY")]
            if bad or not sigs:
                e.append(f"--signatures: expected IR and/or XY, got {a.signatures!r}")
            if "XY" in sigs and any(d % 2 or d < 6 for d in a.dims):
                e.append("--dims must be even and >= 6 when XY is swept")
            if any(d < 3 for d in a.dims):
                e.append("--dims must be >= 3")
        if self.command == "sensitivity":
            if a.trials < 1:
                e.append("--trials must be >= 1")
            if any(y <= x for x, y in zip(a.alphas, a.alphas[1:])) or any(v < 0 for v in a.alphas):
                e.append("--alphas must be non-negative and strictly increasing")
        if self.command == "stats" and a.bins < 1:
            e.append("--bins must be >= 1")
        if self.command in ("encode", "sweep", "sensitivity", "stats", "ingest") \
                and a.output is None:
            e.append("-o/--output is required")
        if e:
            raise UsageError("; ".join(e))


def parse_run_config(argv, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    known, rest = pre.parse_known_args(argv)
    command = next((t for t in rest if t in COMMANDS), None)
    errors: list[str] = []
    if command is not None:
        sub = parser._subparsers._group_actions[0].choices[command]
        if known.config is not None:
            errors += _apply_defaults(sub, _read_config(known.config), str(known.config),
                                      strict=True)
        env = {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items()
               if k.startswith(ENV_PREFIX)}
        errors += _apply_defaults(sub, env, "environment", strict=False)
    ns = parser.parse_args(argv)
    cfg = RunConfig(ns.command, ns, errors)
    cfg.validate()
    return cfg


# -- commands -----------------------------------------------------------------

def _corpus(a):
    if a.annotations is not None:
        return ingest_polygons(a.annotations)
    return generate_synthetic(GeneratorSpec.parse(a.synthetic, a.size), a.count, a.seed)


def cmd_encode(a) -> tuple[dict, int]:
    mask = read_mask(a.mask)
    sv = encode(mask, a.basis, a.dim, a.tau, normalize=a.normalize)
    atomic_write(a.output, sv.to_json() + "\n")
    return {"center": list(sv.center), "basis": sv.coeffs.basis.value,
            "dim": len(sv.coeffs)}, EXIT_OK


def _read_vectors(path: Path) -> list[ShapeVector]:
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        raise ShapeError(f"{path}: no shape vectors")
    try:
        return [ShapeVector.from_json(text)]
    except json.JSONDecodeError:
        pass
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                out.append(ShapeVector.from_json(line))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ShapeError(f"{path}:{n}: bad shape vector: {exc}") from exc
    return out


def cmd_decode(a) -> tuple[dict, int]:
    vectors = _read_vectors(a.input)
    if len(vectors) == 1:
        contour = decode_one(vectors[0], a.points)
        if a.output is None:
            raise UsageError("-o/--output is required")
        if a.raster:
            w, h = a.raster
            atomic_write(a.output, encode_pbm(rasterize(contour, w, h)))
        else:
            atomic_write(a.output, contour_to_json(contour) + "\n")
        return {"shapes": 1}, EXIT_OK

    if a.output is None:
        raise UsageError("-o/--output directory is required for a batch")
    groups: dict[tuple, list[int]] = {}
    for i, v in enumerate(vectors):
        groups.setdefault((v.coeffs.basis, len(v.coeffs)), []).append(i)
    contours: list = [None] * len(vectors)
    for idx in groups.values():
        out = decode_batch(DecodeBatch.from_vectors([vectors[i] for i in idx], a.points)).output
        for i, pts in zip(idx, out):
            contours[i] = pts.T
    a.output.mkdir(parents=True, exist_ok=True)
    for i, (v, c) in enumerate(zip(vectors, contours)):
        name = v.id if v.id is not None else f"{i:05d}"
        if a.raster:
            w, h = a.raster
            atomic_write(a.output / f"{name}.pbm", encode_pbm(rasterize(c, w, h)))
        else:
            atomic_write(a.output / f"{name}.json", contour_to_json(c) + "\n")
    return {"shapes": len(vectors)}, EXIT_OK


def cmd_sweep(a) -> tuple[dict, int]:
    corpus = _corpus(a)
    sigs = [s.strip().upper() for s in a.signatures.split(",") if s.strip()]
    rows = recon_error_sweep(corpus, sigs, a.dims, a.basis, a.points, a.threads)
    atomic_write(a.output, sweep_csv(rows))
    failed = sum(r.failed for r in rows)
    return ({"rows": len(rows), "shapes": len(corpus), "failed": failed,
             "skipped": corpus.skipped}, EXIT_DATA if failed else EXIT_OK)


def cmd_sensitivity(a) -> tuple[dict, int]:
    corpus = _corpus(a)
    rep = sensitivity_sweep(corpus, a.basis, a.dim, a.alphas, a.trials, a.seed,
                            n_points=a.points, tau=a.tau, threads=a.threads)
    atomic_write(a.output, sensitivity_csv(rep))
    return {"shapes": rep.shapes, "indices": len(rep.indices), "alphas": rep.alphas,
            "trials": rep.trials, "flagged": rep.flagged}, EXIT_OK


def cmd_stats(a) -> tuple[dict, int]:
    corpus = _corpus(a)
    st = coefficient_stats(corpus, a.basis, a.dim, bins=a.bins, tau=a.tau, threads=a.threads)
    atomic_write(a.output, stats_csv(st))
    if a.hist is not None:
        atomic_write(a.hist, histogram_csv(st))
    return {"shapes": len(corpus), "overall_mean": st.overall_mean,
            "overall_variance": st.overall_variance}, EXIT_OK


def cmd_ingest(a) -> tuple[dict, int]:
    corpus = ingest_polygons(a.annotations)
    lines, failed = [], 0
    for sid, mask in corpus:
        try:
            sv = encode(mask, a.basis, a.dim, a.tau)
        except ShapeError as exc:
            log.warning("%s: %s", sid, exc)
            failed += 1
            continue
        lines.append(ShapeVector(sv.center, sv.coeffs, sv.scale, sid).to_json())
    if a.masks_dir is not None:
        a.masks_dir.mkdir(parents=True, exist_ok=True)
        for sid, mask in corpus:
            atomic_write(a.masks_dir / f"{sid}.pbm", encode_pbm(mask))
    atomic_write(a.output, "".join(line + "\n" for line in lines))
    return ({"shapes": len(lines), "skipped": corpus.skipped, "failed": failed},
            EXIT_DATA if failed else EXIT_OK)


COMMANDS = {
    "encode": cmd_encode, "decode": cmd_decode, "sweep": cmd_sweep,
    "sensitivity": cmd_sensitivity, "stats": cmd_stats, "ingest": cmd_ingest,
}


def run(argv=None, environ=None) -> int:
    """Entry point; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_run_config(argv, environ)
    except SystemExit as exc:  # argparse usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"irshape: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    a = cfg.args
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary, code = COMMANDS[cfg.command](a)
    except UsageError as exc:
        print(f"irshape: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ShapeError, ValueError, OSError) as exc:
        print(f"irshape: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    out = {"command": cfg.command, "status": "ok" if code == EXIT_OK else "failed",
           "output": None if a.output is None else str(a.output), **summary}
    print(json.dumps(out, default=float))
    return code


def main() -> None:
    sys.exit(run())
