"""Restoration of polarized bivariate signals by time and covariance smoothing."""

__version__ = "0.1.0"

from .estimator import BivariateRestorer
from .forward import ChannelModel, NoiseSpec, apply_adjoint, apply_forward
from .numerics import analytic_adjoint, analytic_transform, conjugate_gradient, thomas_solve
from .signal import covariance_smoothness, generate_signal, instantaneous_covariance, r_snr
from .solver import SolverConfig, solve

__all__ = [
    "BivariateRestorer", "ChannelModel", "NoiseSpec", "SolverConfig",
    "analytic_adjoint", "analytic_transform", "apply_adjoint", "apply_forward",
    "conjugate_gradient", "covariance_smoothness", "generate_signal",
    "instantaneous_covariance", "r_snr", "solve", "thomas_solve",
]
