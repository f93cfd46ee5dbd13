"""
Time integrators for  u_tt = -kappa (-Delta)^{s(x)} u + f(u)  on a periodic grid.

* LFFP  - explicit leap-frog, two-level state (u^{n-1}, u^n);
* CNFP  - Crank-Nicolson on the operator and the nonlinearity, solved by a
          Picard iteration whose linear sub-problems go to conjugate gradients;
* TSFP2 - Strang splitting of the (u, v = u_t) system into the exactly
          solvable constant-order oscillator at s0 and the kick
          v += dt * (-kappa * [(-Delta)^{s(x)} - (-Delta)^{s0}] u + f(u)).

LFFP and CNFP start from u^0 = phi and the Taylor level
u^1 = phi + tau psi + tau^2/2 (-kappa L phi + f(phi)); TSFP2 starts from
(phi, psi) exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from . import expr as _expr
from .errors import BlowupDetected, BracketInvalid, CgStagnated, PicardDiverged
from .flap import DEFAULT_MEMORY_BUDGET, FractionalLaplacian, constant_symbol, make_operator
from .grid import Grid, fft_half, ifft_half
from .orderfield import OrderField, is_constant

METHODS = ("CNFP", "LFFP", "TSFP2")

Nonlinearity = Union[str, Callable[[np.ndarray], np.ndarray], None]


def make_nonlinearity(spec: Nonlinearity) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """None/'none' -> None, 'cubic' -> u**3, other strings parse as expressions in u."""
    if spec is None or spec == "none" or spec == "0":
        return None
    if callable(spec):
        return spec
    if spec in ("cubic", "u^3", "u**3"):
        return lambda u: u * u * u
    tree = _expr.parse(spec)
    unknown = _expr.free_variables(tree) - {"u"}
    if unknown:
        raise _expr.UnboundVariable(f"nonlinearity may only use u, found {sorted(unknown)}")
    return lambda u: np.broadcast_to(_expr.evaluate(tree, {"u": u}), u.shape)


@dataclass(eq=False)
class WaveProblem:
    grid: Grid
    order: OrderField
    phi: np.ndarray
    psi: np.ndarray
    kappa: float = 1.0
    nonlinearity: Nonlinearity = None
    M: int = 15
    evaluator: str = "matrix-free"
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    parallel: bool = False

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.order.grid != self.grid:
            raise ValueError("order field lives on a different grid")
        self.phi = np.array(self.grid.check(np.broadcast_to(self.phi, self.grid.shape)), dtype=float)
        self.psi = np.array(self.grid.check(np.broadcast_to(self.psi, self.grid.shape)), dtype=float)

    @cached_property
    def operator(self) -> FractionalLaplacian:
        return make_operator(self.order, self.M, self.evaluator, self.memory_budget, self.parallel)

    @cached_property
    def f(self) -> Optional[Callable[[np.ndarray], np.ndarray]]:
        return make_nonlinearity(self.nonlinearity)

    def force(self, u: np.ndarray) -> np.ndarray:
        """-kappa L u + f(u)."""
        out = -self.kappa * self.operator.apply(u)
        if self.f is not None:
            out = out + self.f(u)
        return out


@dataclass
class StepperConfig:
    method: str = "TSFP2"
    tau: float = 1e-3
    picard_tol: float = 1e-12
    picard_max_iters: int = 200
    inner_cg_tol: float = 1e-14
    cg_max_iters: int = 2000
    blowup_factor: float = 1e8

    def __post_init__(self):
        self.method = self.method.upper()
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        for name in ("tau", "picard_tol", "inner_cg_tol", "blowup_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class WaveState:
    """Either the two-level pair (u_prev, u) or the first-order pair (u, v)."""

    kind: str
    u: np.ndarray
    u_prev: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    n: int = 0
    t: float = 0.0
    threshold: float = math.inf
    stats: dict = field(default_factory=dict)


def initial_levels(p: WaveProblem, tau: float) -> tuple[np.ndarray, np.ndarray]:
    u0 = p.phi.copy()
    u1 = p.phi + tau * p.psi + 0.5 * tau * tau * p.force(p.phi)
    return u0, u1


def blowup_threshold(p: WaveProblem, factor: float = 1e8) -> float:
    scale = float(np.max(np.abs(p.phi)))
    if scale == 0.0:
        scale = float(np.max(np.abs(p.psi))) or 1.0
    return factor * scale


def initial_state(p: WaveProblem, cfg: StepperConfig) -> WaveState:
    thr = blowup_threshold(p, cfg.blowup_factor)
    if cfg.method == "TSFP2":
        return WaveState("pair", p.phi.copy(), v=p.psi.copy(), threshold=thr)
    u0, u1 = initial_levels(p, cfg.tau)
    return WaveState("two-level", u1, u_prev=u0, n=1, t=cfg.tau, threshold=thr)


def _check_blowup(u: np.ndarray, state: WaveState, n: int, t: float) -> None:
    sup = float(np.max(np.abs(u)))
    if not np.isfinite(sup) or sup > state.threshold:
        raise BlowupDetected(n, t, sup)


def step_lffp(p: WaveProblem, cfg: StepperConfig, state: WaveState) -> WaveState:
    if state.kind != "two-level":
        raise ValueError("LFFP needs a two-level state")
    tau = cfg.tau
    u_next = 2.0 * state.u - state.u_prev + tau * tau * p.force(state.u)
    n = state.n + 1
    _check_blowup(u_next, state, n, n * tau)
    return replace(state, u=u_next, u_prev=state.u, n=n, t=n * tau)


# --- CNFP ------------------------------------------------------------------


def conjugate_gradient(apply_A, b, x0, precond=None, tol=1e-14, max_iters=2000):
    """Preconditioned CG for A x = b; returns (x, iterations).

    Stops when ||r|| <= tol * ||b||. Raises CgStagnated when the iteration
    cap is hit with the residual still above max(tol, 1e-10) * ||b||.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    x = x0.copy()
    r = b - apply_A(x)
    z = precond(r) if precond else r
    d = z.copy()
    rz = float(np.vdot(r, z))
    best = float(np.linalg.norm(r))
    for it in range(1, max_iters + 1):
        if best <= tol * bnorm:
            return x, it - 1
        Ad = apply_A(d)
        dAd = float(np.vdot(d, Ad))
        if dAd <= 0:
            break
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        rnorm = float(np.linalg.norm(r))
        best = min(best, rnorm)
        if rnorm <= tol * bnorm:
            return x, it
        z = precond(r) if precond else r
        rz_new = float(np.vdot(r, z))
        d = z + (rz_new / rz) * d
        rz = rz_new
    # roundoff floor: accept residuals near machine precision
    true_res = float(np.linalg.norm(b - apply_A(x)))
    if true_res <= max(tol, 1e-10) * bnorm:
        return x, max_iters
    raise CgStagnated(f"CG stopped at relative residual {true_res / bnorm:.3e}")


class _CnfpSolver:
    """Cached pieces of the implicit step for one (problem, tau)."""

    def __init__(self, p: WaveProblem, cfg: StepperConfig):
        self.p = p
        self.cfg = cfg
        self.c = 0.5 * p.kappa * cfg.tau**2
        grid = p.grid
        self.inv_diag = 1.0 / (1.0 + self.c * constant_symbol(grid.mu2_half, p.operator.s0))

    def A(self, w):
        return w + self.c * self.p.operator.apply(w)

    def precond(self, r):
        return ifft_half(self.inv_diag * fft_half(r), self.p.grid.shape)

    def solve(self, b, x0):
        return conjugate_gradient(self.A, b, x0, self.precond, self.cfg.inner_cg_tol, self.cfg.cg_max_iters)


def step_cnfp(p: WaveProblem, cfg: StepperConfig, state: WaveState, _solver: _CnfpSolver | None = None) -> WaveState:
    if state.kind != "two-level":
        raise ValueError("CNFP needs a two-level state")
    solver = _solver or _CnfpSolver(p, cfg)
    tau2 = cfg.tau**2
    u, um = state.u, state.u_prev
    rhs = 2.0 * u - um - solver.c * p.operator.apply(um)
    if p.f is not None:
        rhs = rhs + 0.5 * tau2 * p.f(um)
    w = 2.0 * u - um
    cg_total = 0
    if p.f is None:
        w, cg_total = solver.solve(rhs, w)
        picard = 1
    else:
        for picard in range(1, cfg.picard_max_iters + 1):
            w_new, its = solver.solve(rhs + 0.5 * tau2 * p.f(w), w)
            cg_total += its
            delta = float(np.linalg.norm(w_new - w))
            w = w_new
            if not np.isfinite(delta):
                break
            if delta <= cfg.picard_tol * max(1.0, float(np.linalg.norm(w))):
                break
        else:
            raise PicardDiverged(f"Picard iteration did not converge in {cfg.picard_max_iters} iterations")
        if not np.isfinite(delta):
            raise PicardDiverged("Picard iteration produced non-finite values")
    n = state.n + 1
    _check_blowup(w, state, n, n * cfg.tau)
    stats = dict(state.stats)
    stats["picard_iters"] = stats.get("picard_iters", 0) + picard
    stats["cg_iters"] = stats.get("cg_iters", 0) + cg_total
    return replace(state, u=w, u_prev=u, n=n, t=n * cfg.tau, stats=stats)


# --- TSFP2 -----------------------------------------------------------------


def oscillator_substep(uhat, vhat, w, dt):
    """Exact flow of u' = v, v' = -w^2 u over dt (free drift where w = 0)."""
    w = np.asarray(w, dtype=float)
    c = np.cos(w * dt)
    wpos = w > 0
    safe_w = np.where(wpos, w, 1.0)
    s_over_w = np.where(wpos, np.sin(w * dt) / safe_w, dt)
    w_s = np.where(wpos, w * np.sin(w * dt), 0.0)
    u_new = uhat * c + vhat * s_over_w
    v_new = -uhat * w_s + vhat * c
    if np.ndim(u_new) == 0:
        return complex(u_new), complex(v_new)
    return u_new, v_new


class _Tsfp2Tables:
    def __init__(self, p: WaveProblem, tau: float):
        w = math.sqrt(p.kappa) * np.sqrt(constant_symbol(p.grid.mu2_half, p.operator.s0))
        half = 0.5 * tau
        self.c = np.cos(w * half)
        wpos = w > 0
        self.s_over_w = np.where(wpos, np.sin(w * half) / np.where(wpos, w, 1.0), half)
        self.w_s = np.where(wpos, w * np.sin(w * half), 0.0)
        self.kick_needed = p.f is not None or not is_constant(p.order)

    def rotate(self, uh, vh):
        return uh * self.c + vh * self.s_over_w, -uh * self.w_s + vh * self.c


def step_tsfp2(p: WaveProblem, cfg: StepperConfig, state: WaveState, _tables: _Tsfp2Tables | None = None) -> WaveState:
    if state.kind != "pair":
        raise ValueError("TSFP2 needs a (u, v) state")
    tab = _tables or _Tsfp2Tables(p, cfg.tau)
    shape = p.grid.shape
    uh, vh = tab.rotate(fft_half(state.u), fft_half(state.v))
    if tab.kick_needed:
        u1 = ifft_half(uh, shape)
        kick = np.zeros(shape)
        if not is_constant(p.order):
            kick = -p.kappa * p.operator.perturbation(u1)
        if p.f is not None:
            kick = kick + p.f(u1)
        vh = vh + cfg.tau * fft_half(kick)
    uh, vh = tab.rotate(uh, vh)
    u_new, v_new = ifft_half(uh, shape), ifft_half(vh, shape)
    n = state.n + 1
    _check_blowup(u_new, state, n, n * cfg.tau)
    return replace(state, u=u_new, v=v_new, n=n, t=n * cfg.tau)


# --- driver ----------------------------------------------------------------


class Stepper:
    """Binds a problem and config; caches per-tau tables across steps."""

    def __init__(self, p: WaveProblem, cfg: StepperConfig):
        self.p = p
        self.cfg = cfg
        self._cache = None
        if cfg.method == "CNFP":
            self._cache = _CnfpSolver(p, cfg)
        elif cfg.method == "TSFP2":
            self._cache = _Tsfp2Tables(p, cfg.tau)

    def initial_state(self) -> WaveState:
        return initial_state(self.p, self.cfg)

    def step(self, state: WaveState) -> WaveState:
        if self.cfg.method == "LFFP":
            return step_lffp(self.p, self.cfg, state)
        if self.cfg.method == "CNFP":
            return step_cnfp(self.p, self.cfg, state, self._cache)
        return step_tsfp2(self.p, self.cfg, state, self._cache)

    def advance(self, state: WaveState, n_steps: int, callback=None) -> WaveState:
        for _ in range(n_steps):
            state = self.step(state)
            if callback is not None:
                callback(state)
        return state


def steps_for(T: float, tau: float) -> int:
    n = int(round(T / tau))
    if n < 1 or abs(n * tau - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not a whole number of steps of tau={tau}")
    return n


def solve(p: WaveProblem, cfg: StepperConfig, T: float, callback=None) -> WaveState:
    """Integrate to time T and return the final state."""
    stepper = Stepper(p, cfg)
    state = stepper.initial_state()
    n_total = steps_for(T, cfg.tau)
    return stepper.advance(state, n_total - state.n, callback)


def is_stable(p: WaveProblem, method: str, tau: float, horizon: float = 1.0, min_steps: int = 0,
              blowup_factor: float = 1e8) -> bool:
    cfg = StepperConfig(method=method, tau=tau, blowup_factor=blowup_factor)
    n_total = max(int(math.ceil(horizon / tau - 1e-9)), min_steps)
    stepper = Stepper(p, cfg)
    state = stepper.initial_state()
    try:
        stepper.advance(state, n_total - state.n)
    except BlowupDetected:
        return False
    return True


def estimate_critical_timestep(p: WaveProblem, method: str, tau_bracket: tuple[float, float],
                               horizon: float = 1.0, min_steps: int = 0, rel_width: float = 0.02,
                               blowup_factor: float = 1e8) -> float:
    """Bisect (geometrically) for the largest stable tau inside the bracket.

    Stability means no BlowupDetected over max(horizon / tau, min_steps)
    steps. Returns the midpoint of the final bracket, whose relative width
    is at most `rel_width`.
    """
    lo, hi = tau_bracket
    if not 0 < lo < hi:
        raise BracketInvalid(f"bracket {tau_bracket} is not increasing and positive")
    check = lambda tau: is_stable(p, method, tau, horizon, min_steps, blowup_factor)  # noqa: E731
    if not check(lo):
        raise BracketInvalid(f"lower end tau={lo} is already unstable")
    if check(hi):
        raise BracketInvalid(f"upper end tau={hi} is still stable")
    while hi / lo - 1.0 > rel_width:
        mid = math.sqrt(lo * hi)
        if check(mid):
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)
