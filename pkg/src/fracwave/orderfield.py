"""Sampled variable exponent s(x) with its reference order s0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as _expr
from .errors import DeviationTooLarge, OrderOutOfRange
from .grid import Grid

CONSTANT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class OrderField:
    grid: Grid
    values: np.ndarray
    s0: float

    @property
    def smin(self) -> float:
        return float(self.values.min())

    @property
    def smax(self) -> float:
        return float(self.values.max())

    @property
    def deviation(self) -> np.ndarray:
        if is_constant(self):
            return np.zeros_like(self.values)
        return self.values - self.s0


def is_constant(order: OrderField) -> bool:
    return order.smax - order.smin <= CONSTANT_TOL


def _check(values: np.ndarray, s0: float) -> None:
    lo, hi = float(values.min()), float(values.max())
    if not (lo > 0 and hi < 2):
        raise OrderOutOfRange(f"order must lie in (0, 2), got range [{lo}, {hi}]")
    if not 0 < s0 < 2:
        raise OrderOutOfRange(f"reference order s0={s0} outside (0, 2)")
    dev = float(np.max(np.abs(values - s0)))
    if dev >= 1:
        raise DeviationTooLarge(f"max |s(x) - s0| = {dev:.3g} >= 1; the expansion would diverge")


def from_values(grid: Grid, values, s0: float | None = None) -> OrderField:
    values = np.array(grid.check(np.broadcast_to(np.asarray(values, dtype=float), grid.shape)))
    values.setflags(write=False)
    if s0 is None:
        if values.max() - values.min() <= CONSTANT_TOL:
            s0 = float(values.flat[0])
        else:
            s0 = float(values.mean())
    _check(values, s0)
    return OrderField(grid, values, float(s0))


def sample_order(e, grid: Grid, s0: float | None = None) -> OrderField:
    """Sample a constant, expression string or parsed expression on `grid`.

    Axes bind to the variables x, y, z in order. `s0` defaults to the
    discrete mean of the samples.
    """
    if isinstance(e, (int, float, np.floating)):
        values = np.full(grid.shape, float(e))
    else:
        tree = _expr.parse(e) if isinstance(e, str) else e
        names = ("x", "y", "z")[: grid.dim]
        bindings = dict(zip(names, grid.coords))
        values = np.broadcast_to(_expr.evaluate(tree, bindings), grid.shape)
    return from_values(grid, values, s0)
