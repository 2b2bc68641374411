"""Synthetic ultrasound-like lesion images.

Benign lesions are rotated ellipses; malignant lesions are star polygons with
spiky margins. Both are darker than a smooth background and the whole image
carries multiplicative speckle. Everything is drawn from ``seed``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..imaging import boundary_mask, save_image, save_mask
from .manifest import SampleRecord, write_manifest


@dataclass
class SynthConfig:
    n_benign: int = 50
    n_malignant: int = 50
    side: int = 64
    seed: int = 0
    speckle_strength: float = 0.25
    spike_count: tuple[int, int] = (5, 9)
    spike_amplitude: tuple[float, float] = (0.25, 0.55)
    dataset_tag: str = "A"

    def validate(self) -> None:
        if self.n_benign < 0 or self.n_malignant < 0:
            raise ValueError("sample counts must be non-negative")
        if self.side < 16 or self.side & (self.side - 1):
            raise ValueError(f"side must be a power of two >= 16, got {self.side}")


def _grid(side: int):
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    return yy, xx


def ellipse_mask(side, center, axes, angle) -> np.ndarray:
    yy, xx = _grid(side)
    dy, dx = yy - center[0], xx - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (u / axes[0]) ** 2 + (v / axes[1]) ** 2 <= 1.0


def star_mask(side, center, inner, outer, n_spikes, phase, rng) -> np.ndarray:
    """Star polygon: radius alternates between jittered inner and outer vertices."""
    n_vert = 2 * n_spikes
    base = phase + np.arange(n_vert) * (2 * np.pi / n_vert)
    angles = base + rng.uniform(-0.25, 0.25, n_vert) * (np.pi / n_vert)
    radii = np.where(np.arange(n_vert) % 2 == 0,
                     outer * rng.uniform(0.85, 1.15, n_vert),
                     inner * rng.uniform(0.9, 1.1, n_vert))
    yy, xx = _grid(side)
    dy, dx = yy - center[0], xx - center[1]
    theta = np.mod(np.arctan2(dy, dx) - angles[0], 2 * np.pi)
    rel = np.mod(angles - angles[0], 2 * np.pi)
    # close the loop so interpolation wraps around
    rel = np.append(rel, 2 * np.pi)
    radii = np.append(radii, radii[0])
    # straight polygon edges between consecutive vertices
    k = np.clip(np.searchsorted(rel, theta, side="right") - 1, 0, n_vert - 1)
    a0, a1 = rel[k], rel[k + 1]
    r0, r1 = radii[k], radii[k + 1]
    p0 = np.stack([r0 * np.cos(a0), r0 * np.sin(a0)])
    p1 = np.stack([r1 * np.cos(a1), r1 * np.sin(a1)])
    d = p1 - p0
    ct, st = np.cos(theta), np.sin(theta)
    # ray (ct, st) * t meets segment p0 + s * d
    denom = ct * d[1] - st * d[0]
    t_edge = (p0[0] * d[1] - p0[1] * d[0]) / np.where(np.abs(denom) < 1e-12, 1e-12, denom)
    return np.hypot(dy, dx) <= t_edge


def _background(side: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = _grid(side)
    yy, xx = yy / side, xx / side
    img = 0.55 + rng.uniform(-0.08, 0.08) * (yy - 0.5) + rng.uniform(-0.08, 0.08) * (xx - 0.5)
    for _ in range(3):
        cy, cx = rng.uniform(0, 1, 2)
        w = rng.uniform(0.15, 0.35)
        img += rng.uniform(-0.08, 0.08) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * w * w))
    return img


def generate_sample(label: int, cfg: SynthConfig, rng: np.random.Generator):
    """One ``(image, mask)`` pair; ``label`` 0 is benign, 1 malignant."""
    side = cfg.side
    center = side / 2 + rng.uniform(-side / 16, side / 16, 2)
    r0 = side * rng.uniform(0.14, 0.2)
    if label == 0:
        axes = (r0 * rng.uniform(1.0, 1.35), r0 * rng.uniform(0.7, 1.0))
        mask = ellipse_mask(side, center, axes, rng.uniform(0, np.pi))
    else:
        n_spikes = int(rng.integers(cfg.spike_count[0], cfg.spike_count[1] + 1))
        amp = rng.uniform(*cfg.spike_amplitude)
        mask = star_mask(side, center, r0 * (1 - amp / 2), r0 * (1 + amp), n_spikes,
                         rng.uniform(0, 2 * np.pi), rng)
    img = _background(side, rng)
    img = np.where(mask, img - rng.uniform(0.22, 0.35), img)
    shape = 1.0 / max(cfg.speckle_strength, 1e-6) ** 2
    speckle = rng.gamma(shape, 1.0 / shape, size=img.shape) if cfg.speckle_strength > 0 else 1.0
    img = np.clip(img * speckle, 0.0, 1.0)
    return img, mask


def synth_arrays(cfg: SynthConfig):
    """In-memory dataset: float images quantised to 8 bits, boolean masks, labels."""
    cfg.validate()
    labels = [0] * cfg.n_benign + [1] * cfg.n_malignant
    streams = np.random.SeedSequence(cfg.seed).spawn(len(labels))
    images, masks = [], []
    for label, ss in zip(labels, streams):
        img, mask = generate_sample(label, cfg, np.random.default_rng(ss))
        images.append(np.round(img * 255.0) / 255.0)
        masks.append(mask)
    if not labels:
        empty = np.zeros((0, cfg.side, cfg.side))
        return empty, empty.astype(bool), np.zeros(0, dtype=np.int64)
    return np.stack(images), np.stack(masks), np.asarray(labels, dtype=np.int64)


def synth_generate(cfg: SynthConfig, out_dir) -> str:
    """Write PGM image/mask pairs and a manifest under ``out_dir``; returns the manifest path."""
    images, masks, labels = synth_arrays(cfg)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    records = []
    for i, (img, mask, label) in enumerate(zip(images, masks, labels)):
        sid = f"{cfg.dataset_tag}{i:04d}"
        img_rel = os.path.join("images", f"{sid}.pgm")
        mask_rel = os.path.join("masks", f"{sid}.pgm")
        save_image(os.path.join(out_dir, img_rel), img)
        save_mask(os.path.join(out_dir, mask_rel), mask)
        records.append(SampleRecord(id=sid, image_path=img_rel, mask_path=mask_rel,
                                    label="malignant" if label else "benign", split="none",
                                    dataset_tag=cfg.dataset_tag))
    path = os.path.join(out_dir, "manifest.tsv")
    write_manifest(records, path)
    return path


def roughness(mask: np.ndarray) -> float:
    """Perimeter squared over area, perimeter counted as 4-connected boundary pixels."""
    return float(boundary_mask(mask).sum()) ** 2 / float(mask.sum())
