"""Grayscale image I/O: binary PGM (P5), optional PNG, raw float-grid dumps.

Images are plain 2D float64 arrays in the [0, 255] working range (row-major,
shape (height, width)). Values are only clipped/quantized at export time.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

FLOAT_GRID_MAGIC = b"PORD"


class FormatError(Exception):
    """Unreadable, truncated or unsupported image/container file."""


def _read_pgm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comment lines between header tokens
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header")
    return buf[start:pos], pos


def _load_pgm(buf: bytes) -> np.ndarray:
    if buf[:2] != b"P5":
        raise FormatError("not a binary PGM (P5) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pgm_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise FormatError(f"bad PGM header token {tok!r}") from exc
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError("zero-dimension image")
    if not 0 < maxval < 65536:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace after maxval
    if maxval < 256:
        raw = np.frombuffer(buf, dtype=np.uint8, offset=pos)
        if raw.size < width * height:
            raise FormatError("truncated PGM pixel data")
        data = raw[: width * height].astype(np.float64)
    else:
        raw = np.frombuffer(buf, dtype=">u2", offset=pos)
        if raw.size < width * height:
            raise FormatError("truncated PGM pixel data")
        data = raw[: width * height].astype(np.float64) * (255.0 / maxval)
    return data.reshape(height, width)


def load_image(path: str | Path) -> np.ndarray:
    """Load a grayscale image as float64 in [0, 255].

    Binary PGM (P5, 8- or 16-bit) is always supported; PNG is read through
    Pillow when available. 16-bit sources are rescaled to [0, 255].
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        return _load_png(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return _load_pgm(buf)


def _load_png(path: Path) -> np.ndarray:
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover - Pillow is a declared dep
        raise FormatError("PNG support requires Pillow") from exc
    try:
        with PILImage.open(path) as im:
            if im.mode == "I;16":
                arr = np.asarray(im, dtype=np.float64) * (255.0 / 65535.0)
            else:
                arr = np.asarray(im.convert("L"), dtype=np.float64)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise FormatError("zero-dimension image")
    return arr


def save_image(path: str | Path, img: np.ndarray) -> None:
    """Write an image as 8-bit binary PGM (or PNG by extension).

    Values are clipped to [0, 255] and rounded; this is the only place the
    pipeline quantizes.
    """
    path = Path(path)
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("image must be a nonempty 2D array")
    quant = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    if path.suffix.lower() == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(quant, mode="L").save(path)
        return
    h, w = quant.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(quant.tobytes())


def save_float_grid(path: str | Path, grid: np.ndarray) -> None:
    """Dump a 2D float64 grid: 16-byte header (magic, u32 h, u32 w, u32 pad)
    followed by little-endian float64 values, row-major."""
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("grid must be 2D")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(FLOAT_GRID_MAGIC)
        fh.write(struct.pack("<III", h, w, 0))
        fh.write(grid.astype("<f8").tobytes())


def load_float_grid(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 16 or buf[:4] != FLOAT_GRID_MAGIC:
        raise FormatError("not a float-grid dump")
    h, w, _ = struct.unpack("<III", buf[4:16])
    need = 16 + 8 * h * w
    if len(buf) < need:
        raise FormatError("truncated float-grid dump")
    return np.frombuffer(buf[16:need], dtype="<f8").reshape(h, w).copy()


def load_mask(path: str | Path) -> np.ndarray:
    """Read a pixel mask from PGM/PNG: 0 = missing, anything else = present."""
    return load_image(path) > 0


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    save_image(path, np.where(mask, 255.0, 0.0))
