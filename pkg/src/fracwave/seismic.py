"""
Viscoacoustic wave propagation with spatially varying attenuation.

    (1/c^2) u_tt = eta (-Delta)^{1+gamma} u + tau_c d/dt[(-Delta)^{1/2+gamma} u]

with c = c0 cos(pi gamma / 2), eta = -(c0/omega0)^{2 gamma} cos(pi gamma) and
tau_c = -c0^{2 gamma - 1} omega0^{-2 gamma} sin(pi gamma). Both fractional
operators go through the matrix-free expansion, each around its own mean
order. Time stepping is leap-frog on u_tt with a backward difference for
the attenuation term, so every step applies each operator exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import expr as _expr
from .errors import BlowupDetected, GammaOutOfRange
from .flap import ExpansionOperator, build_expansion
from .grid import Grid
from .orderfield import from_values


def _sample(spec, grid: Grid) -> np.ndarray:
    if isinstance(spec, (int, float, np.floating)):
        return np.full(grid.shape, float(spec))
    if isinstance(spec, np.ndarray):
        return np.array(grid.check(np.broadcast_to(spec, grid.shape)), dtype=float)
    tree = _expr.parse(spec) if isinstance(spec, str) else spec
    bindings = dict(zip(("x", "y", "z"), grid.coords))
    return np.array(np.broadcast_to(_expr.evaluate(tree, bindings), grid.shape), dtype=float)


@dataclass(eq=False)
class SeismicMedium:
    grid: Grid
    gamma: np.ndarray
    c0: np.ndarray
    omega0: float
    M: int = 20
    c: np.ndarray = field(init=False, repr=False)
    eta: np.ndarray = field(init=False, repr=False)
    tau_coef: np.ndarray = field(init=False, repr=False)
    dispersion_op: ExpansionOperator = field(init=False, repr=False)
    attenuation_op: ExpansionOperator = field(init=False, repr=False)

    def __post_init__(self):
        g, c0, w0 = self.gamma, self.c0, self.omega0
        self.c = c0 * np.cos(np.pi * g / 2)
        self.eta = -(c0 ** (2 * g)) * w0 ** (-2 * g) * np.cos(np.pi * g)
        self.tau_coef = -(c0 ** (2 * g - 1)) * w0 ** (-2 * g) * np.sin(np.pi * g)
        self.dispersion_op = build_expansion(from_values(self.grid, 1.0 + g), self.M)
        self.attenuation_op = build_expansion(from_values(self.grid, 0.5 + g), self.M)

    @property
    def lossless(self) -> bool:
        return not np.any(self.tau_coef)


def build_medium(gamma, c0, omega0: float, grid: Grid, M: int = 20) -> SeismicMedium:
    g = _sample(gamma, grid)
    if np.any(g < 0) or np.any(g >= 0.5):
        raise GammaOutOfRange(f"gamma must lie in [0, 0.5), got range [{g.min()}, {g.max()}]")
    c0v = _sample(c0, grid)
    if np.any(c0v <= 0):
        raise ValueError("reference velocity c0 must be positive")
    if not omega0 > 0:
        raise ValueError("reference frequency omega0 must be positive")
    return SeismicMedium(grid, g, c0v, float(omega0), int(M))


def ricker_initial(nu0: float, xc, grid: Grid) -> np.ndarray:
    """(1 - 2 pi^2 nu0^2 r^2) exp(-pi^2 nu0^2 r^2), r = |x - xc|."""
    xc = np.atleast_1d(np.asarray(xc, dtype=float))
    r2 = sum((X - c) ** 2 for X, c in zip(grid.coords, xc))
    a = (np.pi * nu0) ** 2 * r2
    return (1.0 - 2.0 * a) * np.exp(-a)


@dataclass
class SeismicState:
    u: np.ndarray
    u_prev: np.ndarray
    att_prev: np.ndarray  # attenuation operator applied to u_prev
    n: int = 1
    t: float = 0.0
    threshold: float = np.inf


def seismic_initial_state(medium: SeismicMedium, phi: np.ndarray, psi: np.ndarray, tau: float,
                          blowup_factor: float = 1e8) -> SeismicState:
    """Levels 0 and 1 from the Taylor expansion u(tau) = phi + tau psi + tau^2/2 u_tt(0)."""
    phi = medium.grid.check(phi)
    psi = medium.grid.check(np.broadcast_to(psi, medium.grid.shape))
    c2 = medium.c**2
    utt = c2 * medium.eta * medium.dispersion_op.apply(phi)
    if not medium.lossless:
        utt = utt + c2 * medium.tau_coef * medium.attenuation_op.apply(psi)
    u1 = phi + tau * psi + 0.5 * tau * tau * utt
    att0 = medium.attenuation_op.apply(phi) if not medium.lossless else np.zeros_like(phi)
    scale = float(np.max(np.abs(phi))) or 1.0
    return SeismicState(u1, np.array(phi, dtype=float), att0, 1, tau, blowup_factor * scale)


def step_seismic(medium: SeismicMedium, state: SeismicState, tau: float) -> SeismicState:
    c2 = medium.c**2
    force = medium.eta * medium.dispersion_op.apply(state.u)
    if medium.lossless:
        att = state.att_prev
    else:
        att = medium.attenuation_op.apply(state.u)
        force = force + medium.tau_coef * (att - state.att_prev) / tau
    u_next = 2.0 * state.u - state.u_prev + tau * tau * (c2 * force)
    n = state.n + 1
    sup = float(np.max(np.abs(u_next)))
    if not np.isfinite(sup) or sup > state.threshold:
        raise BlowupDetected(n, n * tau, sup)
    return replace(state, u=u_next, u_prev=state.u, att_prev=att, n=n, t=n * tau)


def run_seismic(medium: SeismicMedium, phi, psi, tau: float, n_steps: int, callback=None) -> SeismicState:
    """Advance until the state holds level n_steps."""
    state = seismic_initial_state(medium, phi, psi, tau)
    while state.n < n_steps:
        state = step_seismic(medium, state, tau)
        if callback is not None:
            callback(state)
    return state


def two_layer_medium(grid: Grid, a1: float = 0.0065, a2: float = 0.0035, omega0: float = 2 * np.pi * 25,
                     c0_upper: float = 11 / 18, c0_lower: float = 1.0, M: int = 20) -> SeismicMedium:
    """gamma = a1 + a2 tanh(100 (y - 1)); c0 switches at y = 1."""
    y = grid.coords[1]
    gamma = a1 + a2 * np.tanh(100.0 * (y - 1.0))
    c0 = np.where(y > 1.0, c0_upper, c0_lower)
    return build_medium(gamma, c0, omega0, grid, M)
