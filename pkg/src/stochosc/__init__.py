"""Simulation and verification toolkit for coupled stochastic oscillators.

The linear model is ``dx = y dt, dy = -Lambda^2 x dt + Pi dw`` with a symmetric,
nonsingular frequency matrix ``Lambda``.  The package provides exact Gaussian
path sampling, the locally linearized (LL) integrator, an Euler-Maruyama
baseline, nonlinear spring-coupled pendulums, and statistics for zero
crossings and law-of-the-iterated-logarithm envelopes.
"""

from .errors import ConfigError, ConvergenceError, PreconditionError, ValidationError
from .linalg import SpectralDecomposition, augmented_exp, eigh_symmetric, matrix_trig, rotation_matrix
from .models import (
    CoupledOscillatorSpec,
    NonlinearDriftSpec,
    PendulumPairSpec,
    as_linear_system,
    growth_bound_check,
    pendulum_drift,
)
from .rng import Stream
from .trajectory import TrajectoryGrid

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "CoupledOscillatorSpec",
    "NonlinearDriftSpec",
    "PendulumPairSpec",
    "PreconditionError",
    "SpectralDecomposition",
    "Stream",
    "TrajectoryGrid",
    "ValidationError",
    "as_linear_system",
    "augmented_exp",
    "eigh_symmetric",
    "growth_bound_check",
    "matrix_trig",
    "pendulum_drift",
    "rotation_matrix",
]
