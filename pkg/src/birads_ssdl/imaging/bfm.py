"""BIRADS-oriented feature maps.

The lesion contour is taken from a binary mask, an exact Euclidean distance
transform measures how far every pixel sits from it, and a Gaussian of that
distance re-weights the image so a band around the contour dominates.
"""

from __future__ import annotations

import numpy as np

DEFAULT_SIGMA = 20.0


class EmptyMaskError(ValueError):
    """The mask (or boundary) has no foreground pixels."""


def _check_mask(mask) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-d, got shape {mask.shape}")
    if not mask.any():
        raise EmptyMaskError("mask has no foreground pixels")
    return mask


def boundary_mask(mask) -> np.ndarray:
    """Foreground pixels with at least one background 4-neighbour.

    Pixels on the image border count as touching background.
    """
    mask = _check_mask(mask)
    p = np.pad(mask, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return mask & ~interior


def extract_boundary(mask) -> set[tuple[int, int]]:
    """Boundary pixel coordinates ``(row, col)`` as a set."""
    rows, cols = np.nonzero(boundary_mask(mask))
    return set(zip(rows.tolist(), cols.tolist()))


def _envelope_1d(f: list[int]) -> list[int]:
    """Squared distance transform of a sampled function along one line.

    Lower envelope of the parabolas ``(q - v)**2 + f[v]``; all arithmetic on
    integers except the breakpoints.
    """
    n = len(f)
    d = [0] * n
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        fq = f[q] + q * q
        while True:
            vk = v[k]
            s = (fq - (f[vk] + vk * vk)) / (2 * q - 2 * vk)
            if s <= z[k]:
                k -= 1
                continue
            break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        vk = v[k]
        d[q] = (q - vk) * (q - vk) + f[vk]
    return d


def squared_edt(sites: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance from every pixel to the nearest site.

    Two separable passes (columns, then rows). Returns int64.
    """
    sites = np.asarray(sites, dtype=bool)
    if not sites.any():
        raise EmptyMaskError("distance transform needs at least one site")
    h, w = sites.shape
    big = (h + w) ** 2 + 1  # exceeds any achievable squared distance
    col_pass = np.empty((h, w), dtype=np.int64)
    init = np.where(sites, 0, big).astype(np.int64)
    for c in range(w):
        col_pass[:, c] = _envelope_1d(init[:, c].tolist())
    out = np.empty((h, w), dtype=np.int64)
    for r in range(h):
        out[r, :] = _envelope_1d(col_pass[r, :].tolist())
    return out


def edt(boundary, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Euclidean distance (pixels) to the nearest boundary pixel.

    ``boundary`` is either a boolean site image or an iterable of ``(row, col)``
    coordinates (such as an ``np.argwhere`` result), in which case ``height``
    and ``width`` are required.
    """
    if isinstance(boundary, np.ndarray) and boundary.ndim == 2 and height is None and width is None:
        sites = boundary.astype(bool)
    else:
        if height is None or width is None:
            raise ValueError("height and width are required for coordinate boundaries")
        sites = np.zeros((height, width), dtype=bool)
        coords = list(boundary)
        if not coords:
            raise EmptyMaskError("boundary is empty")
        r, c = zip(*coords)
        sites[list(r), list(c)] = True
    return np.sqrt(squared_edt(sites).astype(np.float64))


def dtgf(dist: np.ndarray, sigma: float) -> np.ndarray:
    """Distance-coupled Gaussian weight ``exp(-dist**2 / sigma**2)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    dist = np.asarray(dist, dtype=np.float64)
    return np.exp(-(dist * dist) / (sigma * sigma))


def make_bfm(image: np.ndarray, mask: np.ndarray, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Weight ``image`` by the Gaussian of its distance to the lesion contour."""
    image = np.asarray(image, dtype=np.float64)
    mask = _check_mask(mask)
    if image.shape != mask.shape:
        raise ValueError(f"image shape {image.shape} != mask shape {mask.shape}")
    weights = dtgf(np.sqrt(squared_edt(boundary_mask(mask)).astype(np.float64)), sigma)
    return image * weights


def center_crop_pad(image: np.ndarray, mask: np.ndarray, side: int):
    """Cut a ``side x side`` window centred on the lesion centroid.

    Regions of the window falling outside the source are zero.
    """
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    mask = _check_mask(mask)
    image = np.asarray(image)
    if image.shape != mask.shape:
        raise ValueError(f"image shape {image.shape} != mask shape {mask.shape}")
    rows, cols = np.nonzero(mask)
    cy = int(np.floor(rows.mean() + 0.5))
    cx = int(np.floor(cols.mean() + 0.5))
    top, left = cy - side // 2, cx - side // 2
    h, w = mask.shape
    out_img = np.zeros((side, side), dtype=image.dtype)
    out_mask = np.zeros((side, side), dtype=bool)
    r0, r1 = max(top, 0), min(top + side, h)
    c0, c1 = max(left, 0), min(left + side, w)
    if r0 < r1 and c0 < c1:
        out_img[r0 - top:r1 - top, c0 - left:c1 - left] = image[r0:r1, c0:c1]
        out_mask[r0 - top:r1 - top, c0 - left:c1 - left] = mask[r0:r1, c0:c1]
    return out_img, out_mask
