"""Binary 8-bit portable graymap (P5) reading and writing."""

from __future__ import annotations

import os

import numpy as np


class PGMError(ValueError):
    pass


def _tokens(data: bytes, count: int, pos: int):
    """Pull ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PGMError("truncated PGM header")
        out.append(data[start:pos])
    return out, pos


def read_pgm(path) -> np.ndarray:
    """Read a P5 file with maxval <= 255 into a ``(height, width)`` uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise PGMError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    (w, h, maxval), pos = _tokens(data, 3, 2)
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise PGMError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 256:
        raise PGMError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos:pos + width * height]
    if len(pixels) != width * height:
        raise PGMError(f"{path}: expected {width * height} pixel bytes, found {len(pixels)}")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
    if maxval != 255:
        arr = np.round(arr.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return arr.copy()


def write_pgm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise PGMError(f"PGM needs a 2-d array, got shape {pixels.shape}")
    if pixels.dtype != np.uint8:
        raise PGMError(f"PGM writer expects uint8 pixels, got {pixels.dtype}")
    h, w = pixels.shape
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(pixels).tobytes())
    os.replace(tmp, path)


def load_image(path) -> np.ndarray:
    """Intensities normalised to [0, 1] as float64 (value / 255)."""
    return read_pgm(path).astype(np.float64) / 255.0


def save_image(path, image: np.ndarray) -> None:
    q = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    write_pgm(path, q)


def load_mask(path) -> np.ndarray:
    return read_pgm(path) >= 128


def save_mask(path, mask: np.ndarray) -> None:
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))
