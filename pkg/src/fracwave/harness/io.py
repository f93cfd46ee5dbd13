"""
Binary field snapshots (FWS1) and versioned CSV reports.

FWS1 layout, little-endian throughout::

    b"FWS1" | u8 dim | dim x (u32 J, f64 a, f64 b) | f64 time | N x f64 (C order)
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import BadMagic, GridMismatch, TruncatedFile
from ..grid import Field, Grid, build_grid

MAGIC = b"FWS1"
CSV_SCHEMA = "fracwave-csv/1"

_AXIS = struct.Struct("<Idd")


@dataclass(frozen=True, eq=False)
class Snapshot:
    grid: Grid
    values: np.ndarray
    time: float

    @property
    def field(self) -> Field:
        return Field(self.grid, self.values)


def encode_snapshot(values: np.ndarray, grid: Grid, time: float) -> bytes:
    values = grid.check(values)
    parts = [MAGIC, struct.pack("<B", grid.dim)]
    for (a, b), J in zip(grid.bounds, grid.sizes):
        parts.append(_AXIS.pack(J, a, b))
    parts.append(struct.pack("<d", time))
    parts.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_snapshot(data: bytes, grid: Grid | None = None) -> Snapshot:
    if data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {data[:4]!r}")
    if len(data) < 5:
        raise TruncatedFile("missing dimension byte")
    dim = data[4]
    pos = 5
    bounds, sizes = [], []
    for _ in range(dim):
        if len(data) < pos + _AXIS.size:
            raise TruncatedFile("header ends inside an axis record")
        J, a, b = _AXIS.unpack_from(data, pos)
        pos += _AXIS.size
        sizes.append(J)
        bounds.append((a, b))
    if len(data) < pos + 8:
        raise TruncatedFile("header ends before the time stamp")
    (time,) = struct.unpack_from("<d", data, pos)
    pos += 8
    N = int(np.prod(sizes))
    if len(data) < pos + 8 * N:
        raise TruncatedFile(f"expected {N} values, file holds {(len(data) - pos) // 8}")
    file_grid = build_grid(bounds, sizes)
    if grid is not None and grid != file_grid:
        raise GridMismatch(f"snapshot grid {file_grid} differs from expected {grid}")
    values = np.frombuffer(data, dtype="<f8", count=N, offset=pos).reshape(file_grid.shape).astype(float)
    return Snapshot(file_grid, values, time)


def write_snapshot(field: Field | np.ndarray, time: float, path, grid: Grid | None = None) -> Path:
    """Write a field; pass `grid` when `field` is a bare array."""
    if isinstance(field, Field):
        grid, values = field.grid, field.values
    else:
        if grid is None:
            raise TypeError("a grid is required for bare arrays")
        values = field
    path = Path(path)
    path.write_bytes(encode_snapshot(values, grid, float(time)))
    return path


def read_snapshot(path, grid: Grid | None = None) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes(), grid)


def write_csv(path, kind: str, columns: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> Path:
    """CSV with a leading '# fracwave-csv/1 kind=...' schema comment."""
    path = Path(path)
    extra = "".join(f" {k}={v}" for k, v in (meta or {}).items())
    with path.open("w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA} kind={kind}{extra}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[str, list[dict]]:
    """Return (schema comment, rows as dicts of strings)."""
    with Path(path).open(newline="") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith("# "):
            raise ValueError("missing schema comment")
        return header[2:], list(csv.DictReader(fh))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
