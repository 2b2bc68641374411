"""Tab-separated dataset manifests.

Format::

    #bssdl-manifest v1
    id<TAB>image_path<TAB>mask_path<TAB>label<TAB>split<TAB>dataset_tag

Further lines starting with ``#`` are comments. Relative paths resolve
against the manifest's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from ..imaging import PGMError, read_pgm

MANIFEST_HEADER = "#bssdl-manifest v1"
LABELS = ("benign", "malignant", "unlabeled")
SPLITS = ("train", "test", "none")
COLUMNS = ("id", "image_path", "mask_path", "label", "split", "dataset_tag")


class ManifestError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image_path: str
    mask_path: str
    label: str
    split: str = "none"
    dataset_tag: str = "A"

    @property
    def is_labeled(self) -> bool:
        return self.label != "unlabeled"

    @property
    def label_index(self) -> int:
        return {"benign": 0, "malignant": 1}[self.label]


def write_manifest(records, path) -> None:
    lines = [MANIFEST_HEADER, "#" + "\t".join(COLUMNS)]
    for r in records:
        values = [getattr(r, f.name) for f in fields(SampleRecord)]
        if any("\t" in str(v) or "\n" in str(v) for v in values):
            raise ValueError(f"record {r.id!r} contains a tab or newline")
        lines.append("\t".join(str(v) for v in values))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def resolve(path, manifest_path) -> str:
    if os.path.isabs(path):
        return path
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), path)


def _pgm_shape(path) -> tuple[int, int]:
    return read_pgm(path).shape


def load_manifest(path, check_files: bool = True) -> list[SampleRecord]:
    """Parse and validate a manifest; every failure names its line number."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise ManifestError(path, 0, f"cannot read manifest: {exc}") from None
    if not lines or lines[0].rstrip("\r") != MANIFEST_HEADER:
        raise ManifestError(path, 1, f"missing header {MANIFEST_HEADER!r}")
    records = []
    seen = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != len(COLUMNS):
            raise ManifestError(path, lineno, f"expected {len(COLUMNS)} tab-separated fields, got {len(parts)}")
        rec = SampleRecord(*parts)
        if rec.label not in LABELS:
            raise ManifestError(path, lineno, f"bad label {rec.label!r}; expected one of {LABELS}")
        if rec.split not in SPLITS:
            raise ManifestError(path, lineno, f"bad split {rec.split!r}; expected one of {SPLITS}")
        if not rec.id or rec.id in seen:
            raise ManifestError(path, lineno, f"empty or duplicate id {rec.id!r}")
        seen.add(rec.id)
        if check_files:
            img = resolve(rec.image_path, path)
            msk = resolve(rec.mask_path, path)
            for p in (img, msk):
                if not os.path.exists(p):
                    raise ManifestError(path, lineno, f"file not found: {p}")
            try:
                ishape, mshape = _pgm_shape(img), _pgm_shape(msk)
            except PGMError as exc:
                raise ManifestError(path, lineno, str(exc)) from None
            if ishape != mshape:
                raise ManifestError(path, lineno, f"image {ishape} and mask {mshape} sizes differ")
        records.append(rec)
    return records
