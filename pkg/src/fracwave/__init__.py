"""
Spectral solvers for wave equations with a variable-order fractional
Laplacian (-Delta)^{s(x)} on periodic domains.
"""

from .errors import FracWaveError
from .expr import evaluate, parse
from .flap import assemble_dense, build_expansion, constant_order, make_operator, truncation_indicator
from .grid import Field, Grid, build_grid, forward, grid_from_step, inverse
from .orderfield import OrderField, from_values, sample_order
from .seismic import SeismicMedium, build_medium, ricker_initial, step_seismic
from .stepping import StepperConfig, WaveProblem, WaveState, estimate_critical_timestep, solve

__version__ = "0.1.0"

__all__ = [
    "Field", "FracWaveError", "Grid", "OrderField", "SeismicMedium", "StepperConfig", "WaveProblem",
    "WaveState", "assemble_dense", "build_expansion", "build_grid", "build_medium", "constant_order",
    "estimate_critical_timestep", "evaluate", "forward", "from_values", "grid_from_step", "inverse",
    "make_operator", "parse", "ricker_initial", "sample_order", "solve", "step_seismic", "truncation_indicator",
]
