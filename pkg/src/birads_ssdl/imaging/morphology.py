"""Binary morphology with Euclidean disc elements, and the Dice overlap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def disc_offsets(radius: int) -> list[tuple[int, int]]:
    """Offsets ``(dy, dx)`` with ``dy**2 + dx**2 <= radius**2``."""
    r = int(radius)
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
            if dy * dy + dx * dx <= r * r]


@dataclass
class MorphResult:
    mask: np.ndarray
    emptied: bool = False


def _shifted(padded: np.ndarray, r: int, dy: int, dx: int, h: int, w: int) -> np.ndarray:
    return padded[r + dy:r + dy + h, r + dx:r + dx + w]


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return mask.copy()
    h, w = mask.shape
    padded = np.pad(mask, radius, constant_values=False)
    out = np.zeros_like(mask)
    for dy, dx in disc_offsets(radius):
        out |= _shifted(padded, radius, dy, dx, h, w)
    return out


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Erosion; pixels outside the image count as foreground.

    With that border rule, ``erode(dilate(m, r), r)`` always contains ``m``.
    """
    mask = np.asarray(mask, dtype=bool)
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return mask.copy()
    h, w = mask.shape
    padded = np.pad(mask, radius, constant_values=True)
    out = np.ones_like(mask)
    for dy, dx in disc_offsets(radius):
        out &= _shifted(padded, radius, dy, dx, h, w)
    return out


def morph(mask: np.ndarray, radius: int, op: str) -> MorphResult:
    """Dilate or erode ``mask`` by a disc; flags erosions that empty the mask."""
    if op == "dilate":
        out = dilate(mask, radius)
    elif op == "erode":
        out = erode(mask, radius)
    else:
        raise ValueError(f"op must be 'dilate' or 'erode', got {op!r}")
    return MorphResult(out, emptied=not out.any())


def dice(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total
