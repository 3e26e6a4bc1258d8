"""Heat equation with fractional boundary noise as a random dynamical system.

Spectral Galerkin model, stationary noise paths and their shifts, the mild
cocycle and its linearization, multiplicative-ergodic Lyapunov spectra,
stationary points with local stable/unstable/center charts, and a laboratory
of certified a priori bounds.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .bounds_lab import (
    GronwallInstance,
    Inequality,
    apriori_bound_check,
    certify_ensemble,
    derivative_growth_bound,
    difference_bound_check,
    kernel_integrability_check,
    powered_gronwall_bound,
    r_alpha,
    series_sum,
    trace_class_diagnostic,
)
from .cocycle_solver import cocycle_apply, solve_random_pde
from .errors import (
    ChartFailure,
    ContractionRefusal,
    DivergentIntegral,
    HorizonError,
    NonDissipativeRefusal,
    NonStationaryError,
    NumericalRefusal,
    SingularOperatorError,
    SpectralGapError,
    StepSizeError,
)
from .met_lyapunov import LyapunovSpectrum, lyapunov_spectrum, oseledets_splitting
from .noise_shift import NoisePath, sample_path, shift
from .nonlinearity import Nonlinearity, from_config
from .spectral_core import SpectralModel, StateVector, build_model, make_model
from .stationary_manifolds import (
    ManifoldChart,
    center_chart,
    stable_chart,
    stationary_point,
    unstable_chart,
)
from .variational import linearize

__all__ = [
    "__version__",
    "ChartFailure",
    "ContractionRefusal",
    "DivergentIntegral",
    "GronwallInstance",
    "HorizonError",
    "Inequality",
    "LyapunovSpectrum",
    "ManifoldChart",
    "NoisePath",
    "NonDissipativeRefusal",
    "NonStationaryError",
    "Nonlinearity",
    "NumericalRefusal",
    "SingularOperatorError",
    "SpectralGapError",
    "SpectralModel",
    "StateVector",
    "StepSizeError",
    "apriori_bound_check",
    "build_model",
    "center_chart",
    "certify_ensemble",
    "cocycle_apply",
    "derivative_growth_bound",
    "difference_bound_check",
    "from_config",
    "kernel_integrability_check",
    "linearize",
    "lyapunov_spectrum",
    "make_model",
    "oseledets_splitting",
    "powered_gronwall_bound",
    "r_alpha",
    "sample_path",
    "series_sum",
    "shift",
    "solve_random_pde",
    "stable_chart",
    "stationary_point",
    "trace_class_diagnostic",
    "unstable_chart",
]
