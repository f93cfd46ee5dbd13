"""
Discrete variable-order fractional Laplacian on a periodic grid.

Three evaluators are provided:

* constant order: multiply the spectrum by |mu_k|^(2s), O(N log N);
* dense: the full N x N matrix a_jl = (1/N) sum_k |mu_k|^(2 s(x_j)) e^{i mu_k.(x_j - x_l)},
  O(N^2) storage and work (plus a circulant-embedded Toeplitz product for
  constant order in 1D);
* matrix-free: the symbol is expanded around the reference order s0,

      |mu|^(2 s(x)) = |mu|^(2 s0) sum_m (s(x) - s0)^m (ln |mu|^2)^m / m!,

  and truncated after M terms. Each term is a space-only weight times a
  frequency-only multiplier, so evaluating it costs one inverse FFT and the
  whole operator costs O(M N log N).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import (
    DimUnsupported,
    MemoryBudgetExceeded,
    NegativeM,
    NonpositiveFrequency,
    NotConstantOrder,
    OrderOutOfRange,
)
from .grid import Grid, Spectrum, fft_half, get_workers, ifft_half
from .orderfield import OrderField, is_constant

DEFAULT_MEMORY_BUDGET = 8 * 2**30
# spectral multipliers evaluated per block of expansion terms
TERM_BLOCK_BYTES = 2**20


def constant_symbol(mu2: np.ndarray, s: float) -> np.ndarray:
    """|mu|^(2s) with the zero mode set to 0."""
    with np.errstate(divide="ignore"):
        sym = np.power(mu2, s)
    return np.where(mu2 == 0, 0.0, sym)


def apply_constant_order(spec: Spectrum, s: float) -> Spectrum:
    if not 0 < s < 2:
        raise OrderOutOfRange(f"order {s} outside (0, 2)")
    return Spectrum(spec.grid, spec.coeffs * constant_symbol(spec.grid.mu2, s))


def constant_order(u: np.ndarray, grid: Grid, s: float) -> np.ndarray:
    """Real-space (-Delta)^s u for constant s."""
    if not 0 < s < 2:
        raise OrderOutOfRange(f"order {s} outside (0, 2)")
    return ifft_half(constant_symbol(grid.mu2_half, s) * fft_half(grid.check(u)), grid.shape)


class FractionalLaplacian:
    """Common interface the time steppers rely on."""

    grid: Grid
    order: OrderField

    @property
    def s0(self) -> float:
        return self.order.s0

    def apply(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def perturbation(self, u: np.ndarray) -> np.ndarray:
        """apply(u) minus the constant-order operator at s0."""
        raise NotImplementedError

    def constant(self, u: np.ndarray) -> np.ndarray:
        return constant_order(u, self.grid, self.s0)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.apply(u)


# ---------------------------------------------------------------------------
# dense path


@dataclass(frozen=True, eq=False)
class DenseOperator(FractionalLaplacian):
    grid: Grid
    order: OrderField
    entries: np.ndarray = field(repr=False)

    def apply(self, u):
        u = self.grid.check(u)
        return (self.entries @ u.ravel()).reshape(self.grid.shape)

    def perturbation(self, u):
        return self.apply(u) - self.constant(u)

    @property
    def nbytes(self) -> int:
        return self.entries.nbytes


def dense_bytes(grid: Grid) -> int:
    return grid.N * grid.N * 8


def _kernels(grid: Grid, orders: np.ndarray) -> np.ndarray:
    """Constant-order kernels t_s(m) = (1/N) sum_k |mu_k|^(2s) e^{i mu_k . m h}, one per s."""
    sym = constant_symbol(grid.mu2[None, ...], orders.reshape((-1,) + (1,) * grid.dim))
    axes = tuple(range(1, grid.dim + 1))
    # the symbol is real and even in k, so the kernel is real and even
    return sfft.ifftn(sym, axes=axes, workers=get_workers()).real


def assemble_dense(order: OrderField, memory_budget: int = DEFAULT_MEMORY_BUDGET,
                   chunk_bytes: int = 2**26) -> DenseOperator:
    """Assemble a_jl row by row; row j is the order-s(x_j) kernel centred on x_j.

    The matrix must fit strictly inside `memory_budget` (bytes).
    """
    grid = order.grid
    required = dense_bytes(grid)
    if required >= memory_budget:
        raise MemoryBudgetExceeded(required, memory_budget)
    N = grid.N
    entries = np.empty((N, N))
    s_flat = order.values.ravel()
    if is_constant(order):
        # Toeplitz: one kernel, rolled to every row
        t = _kernels(grid, np.array([order.s0]))[0]
        for j in range(N):
            entries[j] = np.roll(t, np.unravel_index(j, grid.shape), axis=tuple(range(grid.dim))).ravel()
        return DenseOperator(grid, order, entries)
    rows = max(1, chunk_bytes // (16 * N))
    for start in range(0, N, rows):
        stop = min(N, start + rows)
        K = _kernels(grid, s_flat[start:stop])
        for r, j in enumerate(range(start, stop)):
            shift = np.unravel_index(j, grid.shape)
            entries[j] = np.roll(K[r], shift, axis=tuple(range(grid.dim))).ravel()
    return DenseOperator(grid, order, entries)


def apply_dense(op: DenseOperator, u: np.ndarray) -> np.ndarray:
    return op.apply(u)


def toeplitz_column(order: OrderField) -> np.ndarray:
    """First column of the constant-order 1D matrix."""
    if order.grid.dim != 1:
        raise DimUnsupported("the Toeplitz fast path is only implemented for d = 1")
    if not is_constant(order):
        raise NotConstantOrder("the Toeplitz fast path needs a constant order")
    return _kernels(order.grid, np.array([order.s0]))[0]


def apply_toeplitz(order: OrderField, u: np.ndarray) -> np.ndarray:
    """Symmetric Toeplitz matvec via a 2J circulant embedding."""
    t = toeplitz_column(order)
    J = t.size
    circ = np.zeros(2 * J)
    circ[:J] = t
    circ[J + 1:] = t[1:][::-1]
    u = order.grid.check(u)
    wk = get_workers()
    out = sfft.irfft(sfft.rfft(circ, workers=wk) * sfft.rfft(u, n=2 * J, workers=wk), n=2 * J, workers=wk)
    return out[:J]


# ---------------------------------------------------------------------------
# matrix-free path


@dataclass(frozen=True, eq=False)
class ExpansionOperator(FractionalLaplacian):
    grid: Grid
    order: OrderField
    M: int
    base_symbol: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)
    deviation_powers: np.ndarray = field(repr=False)
    parallel: bool = False

    @property
    def active_terms(self) -> int:
        """Number of m >= 1 terms that can be nonzero."""
        return 0 if is_constant(self.order) else self.M

    @property
    def nbytes(self) -> int:
        return self.base_symbol.nbytes + self.log_weights.nbytes + self.deviation_powers.nbytes

    def _spectral_terms(self, b: np.ndarray, first: int, stop: int) -> np.ndarray:
        """Real-space terms m = first..stop-1 from the base spectrum b, stacked on axis 0."""
        mult = np.empty((stop - first,) + b.shape, dtype=b.dtype)
        lo = first
        if first == 0:
            mult[0] = b
            lo = 1
        np.multiply(self.log_weights[lo - 1:stop - 1], b, out=mult[lo - first:])
        if self.parallel:
            with ThreadPoolExecutor() as pool:
                terms = list(pool.map(lambda c: ifft_half(c, self.grid.shape), mult))
            return np.stack(terms)
        return ifft_half(mult, self.grid.shape)

    def _accumulate(self, b: np.ndarray, first: int, out: np.ndarray) -> np.ndarray:
        """Add terms m = first..active_terms into out, in ascending m.

        Terms are produced in blocks small enough to stay cache resident; the
        summation order is the same for every block size, so the result does
        not depend on it (or on the parallel flag).
        """
        last = self.active_terms
        count = last + 1 - first
        blocks = max(1, -(-count * b.nbytes // TERM_BLOCK_BYTES))
        block = -(-count // blocks)
        scratch = np.empty(self.grid.shape)
        for start in range(first, last + 1, block):
            stop = min(last + 1, start + block)
            for m, term in zip(range(start, stop), self._spectral_terms(b, start, stop)):
                if m == 0:
                    out += term
                else:
                    np.multiply(self.deviation_powers[m - 1], term, out=scratch)
                    out += scratch
        return out

    def _base(self, u: np.ndarray) -> np.ndarray:
        return self.base_symbol * fft_half(self.grid.check(u))

    def apply(self, u):
        return self._accumulate(self._base(u), 0, np.zeros(self.grid.shape))

    def perturbation(self, u):
        return self._accumulate(self._base(u), 1, np.zeros(self.grid.shape))

    def split(self, u):
        """(constant-order part at s0, perturbation) from a single forward FFT."""
        b = self._base(u)
        return ifft_half(b, self.grid.shape), self._accumulate(b, 1, np.zeros(self.grid.shape))

    def imag_residue(self, u: np.ndarray) -> float:
        """Largest l2 norm of the imaginary part discarded by any complex synthesis."""
        grid = self.grid
        uhat = sfft.fftn(grid.check(u), norm="forward")
        base = constant_symbol(grid.mu2, self.s0) * uhat
        logmu2 = _log_mu2(grid.mu2)
        worst = 0.0
        w = np.ones_like(logmu2)
        for m in range(self.M + 1):
            if m:
                w = w * logmu2 / m
            z = sfft.ifftn(w * base, norm="forward")
            worst = max(worst, float(np.linalg.norm(z.imag)))
        return worst


def _log_mu2(mu2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mu2)
    nz = mu2 > 0
    out[nz] = 2.0 * np.log(np.sqrt(mu2[nz]))
    return out


def build_expansion(order: OrderField, M: int, parallel: bool = False) -> ExpansionOperator:
    if M < 0:
        raise NegativeM(f"truncation count must be >= 0, got {M}")
    grid = order.grid
    mu2 = grid.mu2_half
    base = constant_symbol(mu2, order.s0)
    logmu2 = _log_mu2(mu2)
    weights = np.empty((M,) + mu2.shape)
    w = np.ones_like(mu2)
    for m in range(1, M + 1):
        w = w * logmu2 / m
        weights[m - 1] = w
    dev = order.deviation
    powers = np.empty((M,) + grid.shape)
    p = np.ones(grid.shape)
    for m in range(1, M + 1):
        p = p * dev
        powers[m - 1] = p
    return ExpansionOperator(grid, order, int(M), base, weights, powers, parallel)


def apply_matrix_free(op: ExpansionOperator, u: np.ndarray) -> np.ndarray:
    return op.apply(u)


def apply_perturbation(op: ExpansionOperator, u: np.ndarray) -> np.ndarray:
    return op.perturbation(u)


def truncation_indicator(M: int, mu_abs: float, s0: float) -> float:
    """First dropped expansion term size, 2^M (ln mu)^M / M! * mu^(2 s0)."""
    if mu_abs <= 0:
        raise NonpositiveFrequency(f"frequency magnitude must be positive, got {mu_abs}")
    if M < 0:
        raise NegativeM(f"M must be >= 0, got {M}")
    val = mu_abs ** (2 * s0)
    r = 2.0 * math.log(mu_abs)
    for m in range(1, M + 1):
        val *= r / m
    return val


def make_operator(order: OrderField, M: int = 15, evaluator: str = "matrix-free",
                  memory_budget: int = DEFAULT_MEMORY_BUDGET, parallel: bool = False) -> FractionalLaplacian:
    if evaluator == "matrix-free":
        return build_expansion(order, M, parallel=parallel)
    if evaluator == "dense":
        return assemble_dense(order, memory_budget)
    raise ValueError(f"unknown evaluator {evaluator!r}")
