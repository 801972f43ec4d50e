"""File formats: P4 PBM masks, PNG masks (read only), JSON contours,
atomic file writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .geometry import as_contour, as_mask


def encode_pbm(mask) -> bytes:
    """Serialize a mask as binary PBM (P4).  Foreground is bit value 1."""
    m = as_mask(mask)
    h, w = m.shape
    header = f"P4\n{w} {h}\n".encode("ascii")
    return header + np.packbits(m, axis=1).tobytes()


def _pbm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PBM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def decode_pbm(data: bytes) -> np.ndarray:
    tokens, offset = _pbm_tokens(data, 3)
    if tokens[0] != b"P4":
        raise ValueError(f"not a binary PBM (magic {tokens[0]!r})")
    try:
        w, h = int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise ValueError(f"bad PBM dimensions {tokens[1:]!r}") from exc
    if w < 1 or h < 1:
        raise ValueError(f"bad PBM dimensions {w}x{h}")
    row_bytes = (w + 7) // 8
    if len(data) - offset < row_bytes * h:
        raise ValueError("truncated PBM raster")
    raw = np.frombuffer(data, dtype=np.uint8, count=row_bytes * h, offset=offset)
    bits = np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w]
    return bits.astype(bool)


def read_mask(path) -> np.ndarray:
    """Read a PBM (P4) or, via Pillow, any single-image format such as PNG.

    Non-PBM images are thresholded: any nonzero pixel is foreground.
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P4":
        return decode_pbm(data)
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr > 0


def write_mask(path, mask) -> None:
    atomic_write(path, encode_pbm(mask))


def contour_to_json(contour) -> str:
    return json.dumps([[float(x), float(y)] for x, y in np.asarray(contour)])


def contour_from_json(text: str) -> np.ndarray:
    return as_contour(json.loads(text))


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the target directory, then rename over."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
