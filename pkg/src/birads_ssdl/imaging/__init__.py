"""Image I/O, lesion feature maps and mask morphology."""

from .bfm import (DEFAULT_SIGMA, EmptyMaskError, boundary_mask, center_crop_pad, dtgf, edt,
                  extract_boundary, make_bfm, squared_edt)
from .morphology import MorphResult, dice, dilate, disc_offsets, erode, morph
from .pgm import PGMError, load_image, load_mask, read_pgm, save_image, save_mask, write_pgm

__all__ = [
    "DEFAULT_SIGMA", "EmptyMaskError", "boundary_mask", "center_crop_pad", "dtgf", "edt",
    "extract_boundary", "make_bfm", "squared_edt",
    "MorphResult", "dice", "dilate", "disc_offsets", "erode", "morph",
    "PGMError", "load_image", "load_mask", "read_pgm", "save_image", "save_mask", "write_pgm",
]
