"""Walk through the feature-map pipeline on one synthetic lesion.

Generates a benign and a malignant sample, extracts the boundary, computes
the distance transform and the weighted image, then writes PGM files you
can open in any image viewer.

    python3 demos/feature_maps.py [out_dir]
"""

import os
import sys

import numpy as np

from birads_ssdl.harness.synth import SynthConfig, roughness, synth_arrays
from birads_ssdl.imaging import boundary_mask, dice, dilate, dtgf, edt, erode, make_bfm, save_image


def main(out_dir="demo_bfm"):
    os.makedirs(out_dir, exist_ok=True)
    images, masks, labels = synth_arrays(SynthConfig(n_benign=1, n_malignant=1, side=64, seed=7))
    sigma = 20 * 64 / 512  # 20 px at 512 px corresponds to 2.5 px here

    for image, mask, label in zip(images, masks, labels):
        name = ("benign", "malignant")[label]
        ring = boundary_mask(mask)
        dist = edt(np.argwhere(ring), *mask.shape)
        weight = dtgf(dist, sigma)
        bfm = make_bfm(image, mask, sigma)
        print(f"{name:9s} area={mask.sum():4d}  boundary px={ring.sum():3d}  "
              f"roughness={roughness(mask):.3f}  max dist={dist.max():.1f}  "
              f"energy kept={bfm.sum() / image.sum():.2f}")
        for r in (1, 2, 4):
            print(f"          radius {r}: dice dilate={dice(mask, dilate(mask, r)):.3f}  "
                  f"erode={dice(mask, erode(mask, r)):.3f}")
        save_image(os.path.join(out_dir, f"{name}_image.pgm"), image)
        save_image(os.path.join(out_dir, f"{name}_weight.pgm"), weight)
        save_image(os.path.join(out_dir, f"{name}_bfm.pgm"), bfm / max(bfm.max(), 1e-12))
    print(f"wrote PGM files to {out_dir}/")


if __name__ == "__main__":
    main(*sys.argv[1:])
