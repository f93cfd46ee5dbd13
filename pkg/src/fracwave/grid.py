"""
Periodic tensor-product grids and their discrete Fourier transforms.

A grid on (a_1, b_1) x ... x (a_d, b_d) with even point counts J_m carries
points x_j = a + j*h and frequencies mu_k = 2*pi*k / (b - a) for
-J/2 <= k <= J/2 - 1. Arrays live in the grid's shape (C order, axis 0
slowest); frequency arrays use the standard FFT layout.

Normalization follows

    u_hat_k = (1/N) sum_j u_j exp(-i mu_k . (x_j - a))
    u_j     =       sum_k u_hat_k exp(i mu_k . (x_j - a))

so the forward transform carries the 1/N factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DimOutOfRange, EmptyInterval, GridMismatch, IndexOutOfRange, OddSize

_WORKERS = 1


def set_workers(n: int) -> None:
    """Set the thread count used by every FFT call in the package."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def get_workers() -> int:
    return _WORKERS


@dataclass(frozen=True)
class Grid:
    bounds: tuple[tuple[float, float], ...]
    sizes: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def N(self) -> int:
        return math.prod(self.sizes)

    @property
    def steps(self) -> tuple[float, ...]:
        return tuple((b - a) / J for (a, b), J in zip(self.bounds, self.sizes))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in self.bounds)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.steps)

    def axis_points(self, m: int) -> np.ndarray:
        a, _ = self.bounds[m]
        return a + np.arange(self.sizes[m]) * self.steps[m]

    def axis_frequencies(self, m: int) -> np.ndarray:
        """mu for axis m in FFT order: 0, 1, ..., J/2-1, -J/2, ..., -1 (scaled)."""
        J = self.sizes[m]
        return 2.0 * np.pi * sfft.fftfreq(J, d=1.0 / J) / self.lengths[m]

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of point coordinates, one array per axis, each of grid shape."""
        return tuple(np.meshgrid(*(self.axis_points(m) for m in range(self.dim)), indexing="ij"))

    @cached_property
    def mu2(self) -> np.ndarray:
        """|mu_k|^2 on the full complex-FFT layout."""
        parts = np.meshgrid(*(self.axis_frequencies(m) ** 2 for m in range(self.dim)), indexing="ij")
        return sum(parts)

    @cached_property
    def mu2_half(self) -> np.ndarray:
        """|mu_k|^2 on the real-FFT (half spectrum) layout."""
        axes = [self.axis_frequencies(m) ** 2 for m in range(self.dim - 1)]
        J = self.sizes[-1]
        last = 2.0 * np.pi * sfft.rfftfreq(J, d=1.0 / J) / self.lengths[-1]
        axes.append(last**2)
        parts = np.meshgrid(*axes, indexing="ij")
        return sum(parts)

    def check(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        if values.shape != self.shape:
            if values.size == self.N:
                return values.reshape(self.shape)
            raise GridMismatch(f"array of shape {values.shape} does not live on grid {self.shape}")
        return values


def build_grid(bounds: Sequence[Sequence[float]], sizes: Sequence[int]) -> Grid:
    if len(bounds) != len(sizes):
        raise DimOutOfRange(f"{len(bounds)} intervals but {len(sizes)} sizes")
    if not 1 <= len(sizes) <= 3:
        raise DimOutOfRange(f"dimension must be 1, 2 or 3, got {len(sizes)}")
    for J in sizes:
        if int(J) != J or J % 2 or J < 4:
            raise OddSize(f"point counts must be even and >= 4, got {J}")
    for a, b in bounds:
        if not b > a:
            raise EmptyInterval(f"interval ({a}, {b}) is empty")
    return Grid(
        bounds=tuple((float(a), float(b)) for a, b in bounds),
        sizes=tuple(int(J) for J in sizes),
    )


def grid_from_step(bounds: Sequence[Sequence[float]], h: float | Sequence[float]) -> Grid:
    """Grid whose per-axis point count is (b - a) / h, rounded to the nearest integer."""
    hs = [h] * len(bounds) if np.isscalar(h) else list(h)
    sizes = [int(round((b - a) / hm)) for (a, b), hm in zip(bounds, hs)]
    return build_grid(bounds, sizes)


def frequency(grid: Grid, k: int | Sequence[int]) -> np.ndarray:
    ks = [k] if np.isscalar(k) else list(k)
    if len(ks) != grid.dim:
        raise IndexOutOfRange(f"multi-index {ks} has wrong length for a {grid.dim}-D grid")
    out = np.empty(grid.dim)
    for m, km in enumerate(ks):
        J = grid.sizes[m]
        if not -J // 2 <= km <= J // 2 - 1:
            raise IndexOutOfRange(f"k={km} outside [{-J // 2}, {J // 2 - 1}]")
        out[m] = 2.0 * np.pi * km / grid.lengths[m]
    return out


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray
    imag_residue: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", self.grid.check(np.asarray(self.values, dtype=float)))


@dataclass(frozen=True, eq=False)
class Spectrum:
    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", self.grid.check(np.asarray(self.coeffs, dtype=complex)))

    def mode(self, k: int | Sequence[int]) -> complex:
        """Coefficient at multi-index k, negative indices wrapping as in FFT layout."""
        ks = (k,) if np.isscalar(k) else tuple(k)
        return complex(self.coeffs[ks])


def field_from_function(grid: Grid, func) -> Field:
    return Field(grid, func(*grid.coords))


def forward(u: Field) -> Spectrum:
    return Spectrum(u.grid, sfft.fftn(u.values, norm="forward", workers=_WORKERS))


def inverse(spec: Spectrum) -> Field:
    z = sfft.ifftn(spec.coeffs, norm="forward", workers=_WORKERS)
    return Field(spec.grid, z.real, imag_residue=float(np.linalg.norm(z.imag)))


def fft_half(values: np.ndarray) -> np.ndarray:
    """Normalized real-to-complex forward transform (half spectrum)."""
    return sfft.rfftn(values, norm="forward", workers=_WORKERS)


def ifft_half(coeffs: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of fft_half; leading axes of `coeffs` beyond the grid's are batch axes."""
    axes = tuple(range(-len(shape), 0))
    return sfft.irfftn(coeffs, s=shape, axes=axes, norm="forward", workers=_WORKERS)
