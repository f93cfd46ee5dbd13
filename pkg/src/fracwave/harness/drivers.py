"""
Experiment drivers: single runs, convergence studies, operator benchmarks,
critical-time-step sweeps and matrix-free vs dense comparisons.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .. import expr as _expr
from ..errors import MemoryBudgetExceeded
from ..flap import DEFAULT_MEMORY_BUDGET, assemble_dense, build_expansion, make_operator
from ..grid import Field, Grid, build_grid, set_workers
from ..orderfield import sample_order
from ..seismic import ricker_initial, run_seismic, two_layer_medium
from ..stepping import Stepper, StepperConfig, WaveProblem, estimate_critical_timestep, steps_for
from .io import write_csv, write_snapshot
from .norms import error_norms
from .presets import preset_defaults


@dataclass
class RunConfig:
    """A preset name plus explicit overrides; None means "take the preset value"."""

    preset: Optional[str] = "example1"
    bounds: Optional[tuple] = None
    J: Optional[tuple] = None
    h: Optional[float] = None
    order: Optional[str] = None
    kappa: Optional[float] = None
    nonlinearity: Optional[str] = None
    phi: Optional[str] = None
    psi: Optional[str] = None
    method: Optional[str] = None
    tau: Optional[float] = None
    T: Optional[float] = None
    M: Optional[int] = None
    evaluator: str = "matrix-free"
    snapshot_every: int = 0
    out: Optional[str] = None
    mem_budget: int = DEFAULT_MEMORY_BUDGET
    threads: int = 1
    parallel: bool = False
    seismic: Optional[dict] = None

    def resolved(self) -> "RunConfig":
        """Fill unset fields from the preset and check consistency."""
        base = preset_defaults(self.preset) if self.preset else {}
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        for k, v in base.items():
            if vals.get(k) is None:
                vals[k] = v
        cfg = RunConfig(**vals)
        if cfg.bounds is None:
            raise ValueError("no domain given (set a preset or bounds)")
        cfg.bounds = tuple(tuple(float(v) for v in ab) for ab in cfg.bounds)
        d = len(cfg.bounds)
        if cfg.h is not None:
            cfg.J = tuple(int(round((b - a) / cfg.h)) for a, b in cfg.bounds)
        if isinstance(cfg.J, int):
            cfg.J = (cfg.J,) * d
        cfg.J = tuple(int(j) for j in cfg.J)
        if len(cfg.J) == 1 and d > 1:
            cfg.J = cfg.J * d
        if cfg.M is None:
            cfg.M = 15 if d == 1 else 20
        cfg.method = (cfg.method or "TSFP2").upper()
        if cfg.seismic is None:
            for k in ("order", "phi"):
                if getattr(cfg, k) is None:
                    raise ValueError(f"{k} must be given for a custom problem")
            cfg.kappa = 1.0 if cfg.kappa is None else float(cfg.kappa)
            cfg.psi = "0" if cfg.psi is None else cfg.psi
        if cfg.T is None or not cfg.T > 0:
            raise ValueError("final time T must be positive")
        if cfg.tau is None or not cfg.tau > 0:
            raise ValueError("time step tau must be positive")
        n = steps_for(cfg.T, cfg.tau)
        if cfg.snapshot_every < 0 or (cfg.snapshot_every and n % cfg.snapshot_every):
            raise ValueError(f"snapshot cadence {cfg.snapshot_every} does not divide the step count {n}")
        return cfg

    @property
    def grid(self) -> Grid:
        return build_grid(self.bounds, self.J)


def _sample(text, grid: Grid) -> np.ndarray:
    if isinstance(text, (int, float)):
        return np.full(grid.shape, float(text))
    tree = _expr.parse(str(text))
    bindings = dict(zip(("x", "y", "z")[: grid.dim], grid.coords))
    return np.array(np.broadcast_to(_expr.evaluate(tree, bindings), grid.shape), dtype=float)


def _order_spec(text):
    try:
        return float(text)
    except (TypeError, ValueError):
        return text


def build_problem(cfg: RunConfig) -> WaveProblem:
    cfg = cfg.resolved()
    grid = cfg.grid
    return WaveProblem(
        grid, sample_order(_order_spec(cfg.order), grid), _sample(cfg.phi, grid), _sample(cfg.psi, grid),
        cfg.kappa, cfg.nonlinearity, cfg.M, cfg.evaluator, cfg.mem_budget, cfg.parallel,
    )


# ---------------------------------------------------------------------------
# run


@dataclass
class RunResult:
    grid: Grid
    u: np.ndarray
    t: float
    steps: int
    wall_time: float
    stats: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)  # (t, array) or paths when written to disk


def _seismic_parts(cfg: RunConfig):
    sp = dict(cfg.seismic)
    grid = cfg.grid
    omega0 = sp.get("omega0") or 2 * math.pi * sp["nu0"]
    medium = two_layer_medium(grid, sp["a1"], sp["a2"], omega0, sp["c0_upper"], sp["c0_lower"], cfg.M)
    return medium, ricker_initial(sp["nu0"], sp["xc"], grid)


def run(cfg: RunConfig) -> RunResult:
    cfg = cfg.resolved()
    set_workers(cfg.threads)
    grid = cfg.grid
    n_total = steps_for(cfg.T, cfg.tau)
    out = Path(cfg.out) if cfg.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    snaps: list = []
    stats: dict = {}

    def keep(n, t, u):
        if cfg.snapshot_every and n % cfg.snapshot_every == 0:
            if out:
                snaps.append(write_snapshot(u, t, out / f"snap_{n:08d}.fws", grid))
            else:
                snaps.append((t, u.copy()))

    t0 = time.perf_counter()
    if cfg.seismic is not None:
        medium, phi = _seismic_parts(cfg)
        state = run_seismic(medium, phi, 0.0, cfg.tau, n_total, callback=lambda s: keep(s.n, s.t, s.u))
    else:
        p = build_problem(cfg)
        stepper = Stepper(p, StepperConfig(method=cfg.method, tau=cfg.tau))
        state = stepper.initial_state()
        totals = {"picard_iters": 0, "cg_iters": 0}

        def on_step(s):
            for k in totals:
                totals[k] += s.stats.get(k, 0)
            keep(s.n, s.t, s.u)

        state = stepper.advance(state, n_total - state.n, on_step)
        if cfg.method == "CNFP":
            stats.update(totals)
    wall = time.perf_counter() - t0
    result = RunResult(grid, state.u, state.n * cfg.tau, state.n, wall, stats, snaps)
    if out:
        write_snapshot(state.u, result.t, out / "final.fws", grid)
        meta = {k: v for k, v in asdict(cfg).items() if k not in ("out",)}
        meta.update(steps=result.steps, t=result.t, wall_time=wall, **stats)
        (out / "summary.json").write_text(json.dumps(meta, indent=2, default=str))
    return result


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceRow:
    param: float
    l2_plain: float
    l2_weighted: float
    order: Optional[float]  # None where the rate is meaningless ("n/a")


@dataclass
class ConvergenceReport:
    axis: str
    method: str
    rows: list
    reference: str
    meta: dict = field(default_factory=dict)

    @property
    def orders(self) -> list:
        return [r.order for r in self.rows[1:]]

    def to_csv(self, path) -> Path:
        cols = ("param", "l2_plain", "l2_weighted", "order")
        rows = [(r.param, r.l2_plain, r.l2_weighted, "n/a" if r.order is None else r.order) for r in self.rows]
        return write_csv(path, "convergence", cols, rows, dict(axis=self.axis, method=self.method,
                                                                reference=self.reference.replace(" ", "_")))


ROUNDOFF_FLOOR = 1e-12


def observed_orders(params: Sequence[float], errors: Sequence[float], scale: float = 1.0) -> list:
    """log(e_{i-1}/e_i) / log(p_{i-1}/p_i); None when either error sits at the roundoff floor."""
    out = [None]
    floor = ROUNDOFF_FLOOR * max(scale, 1e-300)
    for i in range(1, len(errors)):
        if errors[i] <= floor or errors[i - 1] <= floor:
            out.append(None)
        else:
            out.append(math.log(errors[i - 1] / errors[i]) / math.log(params[i - 1] / params[i]))
    return out


def _solve_field(cfg: RunConfig) -> np.ndarray:
    return run(replace(cfg, out=None, snapshot_every=0)).u


def convergence(cfg: RunConfig, axis: str, levels: Sequence[float], reference: Optional[float] = None,
                on_level: Optional[Callable] = None) -> ConvergenceReport:
    """Errors against a fine reference as tau (axis='time') or h (axis='space') is refined.

    The default reference uses the finest level divided by 8 in time, or
    by 2 in space. Spatial errors are taken at the coarse-grid points, which
    are a subset of every finer grid.
    """
    if axis not in ("time", "space"):
        raise ValueError("axis must be 'time' or 'space'")
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    cfg = cfg.resolved()
    levels = sorted((float(v) for v in levels), reverse=True)
    if axis == "time":
        ref_param = reference or levels[-1] / 8
        ref = _solve_field(replace(cfg, tau=ref_param))
        grid = cfg.grid
        sols = []
        for tau in levels:
            sols.append(_solve_field(replace(cfg, tau=tau)))
            if on_level:
                on_level(tau)
        pairs = [(Field(grid, u), Field(grid, ref)) for u in sols]
    else:
        ref_param = reference or levels[-1] / 2
        ref_cfg = replace(cfg, h=ref_param, J=None).resolved()
        ref = _solve_field(ref_cfg)
        pairs = []
        for h in levels:
            c = replace(cfg, h=h, J=None).resolved()
            u = _solve_field(c)
            stride = tuple(rj // cj for rj, cj in zip(ref_cfg.J, c.J))
            if any(rj != s * cj for rj, s, cj in zip(ref_cfg.J, stride, c.J)):
                raise ValueError(f"h={h} grid is not nested in the reference grid")
            sub = ref[tuple(slice(None, None, s) for s in stride)]
            pairs.append((Field(c.grid, u), Field(c.grid, sub)))
            if on_level:
                on_level(h)
    norms = [error_norms(a, b) for a, b in pairs]
    weighted = [n[1] for n in norms]
    scale = float(np.sqrt(ref.size) * np.max(np.abs(ref)) * np.sqrt(cfg.grid.cell_volume))
    orders = observed_orders(levels, weighted, scale)
    rows = [ConvergenceRow(p, n[0], n[1], o) for p, n, o in zip(levels, norms, orders)]
    name = "tau" if axis == "time" else "h"
    return ConvergenceReport(axis, cfg.method, rows, f"{cfg.method} {name}={ref_param:g}",
                             dict(order=cfg.order, preset=cfg.preset))


# ---------------------------------------------------------------------------
# bench


@dataclass
class BenchRow:
    N: int
    evaluator: str
    seconds: Optional[float]  # best-of-repeats wall time of one operator application; None = n.a.
    peak_bytes: int
    note: str = ""


def _time_apply(op, u, repeats: int, min_time: float = 0.05) -> float:
    op.apply(u)
    inner = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(inner):
            op.apply(u)
        dt = time.perf_counter() - t0
        if dt >= min_time or inner >= 1 << 14:
            break
        inner *= 2
    samples = [dt / inner]
    for _ in range(repeats - 1):
        t0 = time.perf_counter()
        for _ in range(inner):
            op.apply(u)
        samples.append((time.perf_counter() - t0) / inner)
    return float(min(samples))


def bench(cfg: RunConfig, sizes: Sequence, evaluators: Sequence[str] = ("dense", "matrix-free"),
          repeats: int = 5, seed: int = 0, csv_path=None) -> list:
    """Time one operator application per (N, evaluator); budget overruns become n.a. rows."""
    cfg = cfg.resolved()
    set_workers(cfg.threads)
    rows = []
    rng = np.random.default_rng(seed)
    for size in sizes:
        J = tuple(size) if isinstance(size, (tuple, list)) else (int(size),) * len(cfg.bounds)
        grid = build_grid(cfg.bounds, J)
        order = sample_order(_order_spec(cfg.order), grid)
        u = rng.standard_normal(grid.shape)
        for ev in evaluators:
            try:
                op = make_operator(order, cfg.M, ev, cfg.mem_budget, cfg.parallel)
            except MemoryBudgetExceeded as exc:
                rows.append(BenchRow(grid.N, ev, None, exc.required_bytes, "n.a."))
                continue
            rows.append(BenchRow(grid.N, ev, _time_apply(op, u, repeats), op.nbytes))
            del op
    if csv_path:
        write_csv(csv_path, "bench", ("N", "evaluator", "seconds", "peak_bytes", "note"),
                  [(r.N, r.evaluator, "n.a." if r.seconds is None else r.seconds, r.peak_bytes, r.note)
                   for r in rows], dict(order=cfg.order, M=cfg.M))
    return rows


# ---------------------------------------------------------------------------
# critical time step


@dataclass
class CflReport:
    hs: list
    taus: list
    slope: Optional[float]  # None for a single-h sweep

    def to_csv(self, path) -> Path:
        return write_csv(path, "cfl", ("h", "tau_star"), zip(self.hs, self.taus),
                         {"slope": "n/a" if self.slope is None else self.slope})


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    if len(xs) < 2:
        return None
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def cfl_study(cfg: RunConfig, hs: Sequence[float], min_steps: int = 1000, noise: float = 1e-3, seed: int = 0,
              parallel_sweep: bool = False) -> CflReport:
    """Critical tau per mesh size and the least-squares slope of log tau* against log h.

    The initial data get `noise` times seeded Gaussian noise so every
    Fourier mode is excited; the blow-up bracket is centred on the leap-frog
    bound 2 / (sqrt(kappa) (pi/h)^max s).
    """
    cfg = cfg.resolved()

    def one(h):
        p = build_problem(replace(cfg, h=h, J=None))
        rng = np.random.default_rng(seed)
        p.phi = p.phi + noise * rng.standard_normal(p.grid.shape)
        tc = 2.0 / (math.sqrt(p.kappa) * (math.pi / h) ** p.order.smax)
        return estimate_critical_timestep(p, cfg.method, (0.3 * tc, 3.0 * tc), cfg.T, min_steps)

    if parallel_sweep:
        with ThreadPoolExecutor() as pool:
            taus = list(pool.map(one, hs))
    else:
        taus = [one(h) for h in hs]
    return CflReport(list(hs), taus, loglog_slope(hs, taus))


# ---------------------------------------------------------------------------
# matrix-free vs dense


@dataclass
class CompareRow:
    M: int
    rel_sup: float
    rel_l2: float


def compare_op(cfg: RunConfig, Ms: Sequence[int], n_fields: int = 10, seed: int = 0, csv_path=None) -> list:
    """Worst relative error of the M-term expansion against the dense matrix over seeded random fields."""
    cfg = cfg.resolved()
    grid = cfg.grid
    order = sample_order(_order_spec(cfg.order), grid)
    dense = assemble_dense(order, cfg.mem_budget)
    rng = np.random.default_rng(seed)
    us = [rng.standard_normal(grid.shape) for _ in range(n_fields)]
    refs = [dense.apply(u) for u in us]
    rows = []
    for M in Ms:
        op = build_expansion(order, M)
        sup = l2 = 0.0
        for u, r in zip(us, refs):
            e = op.apply(u) - r
            sup = max(sup, float(np.max(np.abs(e)) / np.max(np.abs(r))))
            l2 = max(l2, float(np.linalg.norm(e) / np.linalg.norm(r)))
        rows.append(CompareRow(int(M), sup, l2))
    if csv_path:
        write_csv(csv_path, "compare-op", ("M", "rel_sup", "rel_l2"), [(r.M, r.rel_sup, r.rel_l2) for r in rows],
                  dict(order=cfg.order, N=grid.N))
    return rows
