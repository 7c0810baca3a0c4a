"""Gaussian-state reconstruction from time-domain Stokes-operator measurements."""

from .covariance import (
    AngleQuartet,
    Cov2,
    Cov4,
    NoiseEllipse,
    noise_ellipse,
    quadrature_variance,
    rotate_cov,
    single_mode_cov,
    sum_rule_residual,
    two_mode_cov,
)
from .errors import (
    ConvergenceError,
    DomainError,
    NumericalConsistencyError,
    TraceFormatError,
    ValidationError,
)
from .signal_filter import BandSpec, VarianceEstimate, bandpass, cross_variance, variance
from .symplectic import (
    SymplecticReport,
    consistency_check,
    gaussian_discord,
    invariants,
    log_negativity,
    ppt_eigenvalues,
    symplectic_eigenvalues,
    symplectic_report,
)
from .synth import StateSpec, SynthRun, beamsplit, sample_traces, squeezed_cov, synth_sweep, tmsv_cov
from .trace_io import Trace, TraceSet, load_manifest, load_trace_file, write_trace_file

__version__ = "0.1.0"

__all__ = [
    "AngleQuartet",
    "Cov2",
    "Cov4",
    "NoiseEllipse",
    "noise_ellipse",
    "quadrature_variance",
    "rotate_cov",
    "single_mode_cov",
    "sum_rule_residual",
    "two_mode_cov",
    "ConvergenceError",
    "DomainError",
    "NumericalConsistencyError",
    "TraceFormatError",
    "ValidationError",
    "SymplecticReport",
    "consistency_check",
    "gaussian_discord",
    "invariants",
    "log_negativity",
    "ppt_eigenvalues",
    "symplectic_eigenvalues",
    "symplectic_report",
    "BandSpec",
    "VarianceEstimate",
    "bandpass",
    "cross_variance",
    "variance",
    "StateSpec",
    "SynthRun",
    "beamsplit",
    "sample_traces",
    "squeezed_cov",
    "synth_sweep",
    "tmsv_cov",
    "Trace",
    "TraceSet",
    "load_manifest",
    "load_trace_file",
    "write_trace_file",
]
