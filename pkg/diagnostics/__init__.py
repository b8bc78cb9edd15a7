"""
Module with the quantitative diagnostics: grid quadrature, divergences, equilibrium residuals
and sample-level analysis
"""

from .quadrature import GridSpec, grid_log_partition, grid_kl, grid_log_density
from .divergences import gaussian_kl, nash_residuals, NashResiduals, DivergenceTrace, divergence_trace_update
from .analysis import mode_coverage, latent_interpolate, energy_gap, trend_test, TrendResult
