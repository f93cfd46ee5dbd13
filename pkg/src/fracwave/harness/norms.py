"""Discrete error norms."""

from __future__ import annotations

import numpy as np

from ..errors import GridMismatch
from ..grid import Field


def error_norms(a: Field, b: Field) -> tuple[float, float, float]:
    """(plain l2, h-weighted l2, sup) of a - b.

    The weighted norm sqrt(prod(h) * sum |e|^2) approximates the continuous
    L2 norm; the plain norm is the bare Euclidean norm of the samples.
    """
    if a.grid != b.grid:
        raise GridMismatch("fields live on different grids")
    e = np.asarray(a.values, dtype=float) - np.asarray(b.values, dtype=float)
    plain = float(np.sqrt(np.sum(e * e)))
    return plain, plain * float(np.sqrt(a.grid.cell_volume)), float(np.max(np.abs(e), initial=0.0))
