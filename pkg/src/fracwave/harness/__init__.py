"""Presets, drivers, I/O and the command-line interface."""

from .drivers import (
    ConvergenceReport,
    RunConfig,
    RunResult,
    bench,
    build_problem,
    cfl_study,
    compare_op,
    convergence,
    loglog_slope,
    observed_orders,
    run,
)
from .io import Snapshot, read_csv, read_snapshot, write_csv, write_snapshot
from .norms import error_norms
from .presets import PRESETS

__all__ = [
    "ConvergenceReport", "PRESETS", "RunConfig", "RunResult", "Snapshot", "bench", "build_problem",
    "cfl_study", "compare_op", "convergence", "error_norms", "loglog_slope", "observed_orders",
    "read_csv", "read_snapshot", "run", "write_csv", "write_snapshot",
]
