"""Deterministic CSV emission shared by training logs and experiment reports."""

from __future__ import annotations

import csv
import io
import math
import os
from typing import Iterable, Mapping, Sequence


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        v = float(value)
        if math.isnan(v):
            return ""
        return f"{v:.6g}"
    return str(value)


def emit_report(rows: Iterable[Mapping], path, columns: Sequence[str] | None = None) -> None:
    """Write ``rows`` as UTF-8 CSV with LF endings and 6-significant-digit numbers.

    Column order is ``columns`` if given, else the keys of the first row.
    Row order is preserved as given.
    """
    rows = list(rows)
    if columns is None:
        if not rows:
            raise ValueError("columns are required when there are no rows")
        columns = list(rows[0].keys())
    for i, row in enumerate(rows):
        extra = set(row) - set(columns)
        if extra:
            raise ValueError(f"row {i} has columns not in the header: {sorted(extra)}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_report(path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
