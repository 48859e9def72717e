"""Perturbations of the loglog vortex in 2D Euler: profiles, solvers and modulus-of-continuity diagnostics."""

from .field_engine import Grid2D, ScalarField, VectorField, biot_savart_direct, biot_savart_fft
from .initial_data import build_g0, fit_hyperbolicity, axis_velocity_profile
from .moc_norms import ModulusKind, moc_norm, moc_seminorm, stratified_pairs
from .transport_solver import RunRecord, SolverConfig, picard_solve, solve
from .trajectory_lab import breakdown_statistic, g_along_trajectory, trace
from .vortex_core import RadialVortexProfile, default_profile, us_gradient, us_velocity, ws_value

__version__ = "0.1.0"

__all__ = [
    "Grid2D", "ModulusKind", "RadialVortexProfile", "RunRecord", "ScalarField", "SolverConfig",
    "VectorField", "axis_velocity_profile", "biot_savart_direct", "biot_savart_fft",
    "breakdown_statistic", "build_g0", "default_profile", "fit_hyperbolicity", "g_along_trajectory",
    "moc_norm", "moc_seminorm", "picard_solve", "solve", "stratified_pairs", "trace",
    "us_gradient", "us_velocity", "ws_value",
]
