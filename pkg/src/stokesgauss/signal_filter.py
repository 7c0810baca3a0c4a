"""Fourier-domain band-pass filtering and variance estimation.

Filtering follows the plain recipe: FFT the whole record (no padding, no
window), zero every bin whose absolute frequency lies outside the closed band
``[omega - delta/2, omega + delta/2]``, inverse FFT.  Variances use the
population (divide-by-N) convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import DomainError
from .trace_io import ShotNoiseRecord, Trace

__all__ = [
    "BandSpec",
    "VarianceEstimate",
    "band_mask",
    "bandpass",
    "bandpass_array",
    "variance",
    "variance_of_array",
    "cross_variance",
    "shot_noise_level",
    "normalized_variance",
    "normalized_stderr",
    "filtered_variance",
    "subtract_dark",
    "to_db",
]

# Imaginary residue allowed after the inverse transform, relative to the signal norm.
_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class BandSpec:
    """Pass band centred on ``omega`` (Hz) with full width ``delta`` (Hz)."""

    omega: float
    delta: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise DomainError(f"bandwidth must be positive, got {self.delta}")
        if not self.omega - self.delta / 2 > 0:
            raise DomainError(
                f"band [{self.low}, {self.high}] Hz must exclude DC"
            )

    @property
    def low(self) -> float:
        return self.omega - self.delta / 2

    @property
    def high(self) -> float:
        return self.omega + self.delta / 2

    def check_nyquist(self, dt: float) -> None:
        nyquist = 0.5 / dt
        if not self.high < nyquist:
            raise DomainError(
                f"band upper edge {self.high} Hz is not below the Nyquist frequency {nyquist} Hz"
            )


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    stderr: float = 0.0
    n_effective: int = 0

    def __post_init__(self):
        if self.stderr < 0:
            raise DomainError("stderr must be non-negative")


def band_mask(n: int, dt: float, band: BandSpec) -> np.ndarray:
    """Boolean mask over ``np.fft.fftfreq(n, dt)`` bins kept by ``band``.

    Edge bins are kept; a relative slack of 1e-9 of the bin spacing absorbs
    round-off in the frequency grid.
    """
    band.check_nyquist(dt)
    freqs = np.abs(np.fft.fftfreq(n, dt))
    slack = 1e-9 / (n * dt)
    return (freqs >= band.low - slack) & (freqs <= band.high + slack)


def bandpass_array(data, dt: float, band: BandSpec) -> np.ndarray:
    """Filter the last axis of ``data``; same contract as :func:`bandpass`."""
    data = np.asarray(data, dtype=float)
    n = data.shape[-1]
    mask = band_mask(n, dt, band)
    spectrum = np.fft.fft(data, axis=-1)
    spectrum[..., ~mask] = 0.0
    out = np.fft.ifft(spectrum, axis=-1)
    norm = np.linalg.norm(out.real)
    resid = np.max(np.abs(out.imag)) if out.size else 0.0
    if norm > 0 and resid > _IMAG_TOL * norm:
        raise ArithmeticError(f"inverse transform left imaginary residue {resid:g}")
    return out.real


def bandpass(trace: Trace, band: BandSpec) -> Trace:
    """Band-pass filter one trace; length, ``dt`` and label are preserved."""
    return Trace(bandpass_array(trace.samples, trace.dt, band), trace.dt, trace.label)


def _as_rows(traces) -> np.ndarray:
    if isinstance(traces, np.ndarray):
        return np.atleast_2d(traces)
    traces = list(traces)
    if not traces:
        raise DomainError("variance needs at least one trace")
    rows = [tr.samples if isinstance(tr, Trace) else np.asarray(tr, dtype=float) for tr in traces]
    lengths = {r.size for r in rows}
    if len(lengths) == 1:
        return np.stack(rows)
    return rows


def variance_of_array(rows) -> VarianceEstimate:
    """Pooled variance over replicate rows; see :func:`variance`."""
    if isinstance(rows, np.ndarray):
        if rows.size == 0:
            raise DomainError("variance needs at least one sample")
        flat = rows.ravel()
        per_trace = rows.var(axis=1)
        n_traces = rows.shape[0]
    else:
        flat = np.concatenate(rows)
        per_trace = np.array([r.var() for r in rows])
        n_traces = len(rows)
    if not np.all(np.isfinite(flat)):
        raise DomainError("variance input contains non-finite samples")
    value = float(np.mean((flat - flat.mean()) ** 2))
    stderr = float(per_trace.std(ddof=1) / math.sqrt(n_traces)) if n_traces > 1 else 0.0
    return VarianceEstimate(value, stderr, int(flat.size))


def variance(traces: Iterable[Trace]) -> VarianceEstimate:
    """Pooled population variance around the pooled mean of all replicates.

    The standard error is the scatter of per-trace variances divided by
    ``sqrt(n_traces)`` (zero for a single trace).
    """
    return variance_of_array(_as_rows(traces))


def cross_variance(sum_traces, diff_traces) -> VarianceEstimate:
    """Symmetrised covariance of two streams from their sum and difference.

    Returns ``(var(sum) - var(diff)) / 4``; the value may be negative.
    """
    vs = sum_traces if isinstance(sum_traces, VarianceEstimate) else variance(sum_traces)
    vd = diff_traces if isinstance(diff_traces, VarianceEstimate) else variance(diff_traces)
    return _cross_from(vs, vd)


def _cross_from(vs: VarianceEstimate, vd: VarianceEstimate) -> VarianceEstimate:
    return VarianceEstimate(
        (vs.value - vd.value) / 4.0,
        math.hypot(vs.stderr, vd.stderr) / 4.0,
        min(vs.n_effective, vd.n_effective),
    )


def subtract_dark(est: VarianceEstimate, dark: Optional[VarianceEstimate]) -> VarianceEstimate:
    """Remove the electronic-noise variance measured with no light."""
    if dark is None:
        return est
    return VarianceEstimate(
        est.value - dark.value, math.hypot(est.stderr, dark.stderr), est.n_effective
    )


def shot_noise_level(shot: ShotNoiseRecord, band: BandSpec,
                     dark: Optional[VarianceEstimate] = None) -> VarianceEstimate:
    """Filtered shot-noise variance times the record's ``intensity_scale``.

    This is the normalisation reference (squared coherent amplitude) for the
    beam the record belongs to.
    """
    rows = np.stack([tr.samples for tr in shot.traces])
    est = subtract_dark(variance_of_array(bandpass_array(rows, shot.traces[0].dt, band)), dark)
    s = shot.intensity_scale
    return VarianceEstimate(est.value * s, est.stderr * s, est.n_effective)


def normalized_variance(raw: VarianceEstimate, shot: VarianceEstimate) -> float:
    """Variance in shot-noise units (vacuum = 1)."""
    if not shot.value > 0:
        raise DomainError(f"shot-noise level must be positive, got {shot.value}")
    return raw.value / shot.value


def normalized_stderr(raw: VarianceEstimate, shot: VarianceEstimate) -> float:
    """First-order standard error of ``raw / shot`` for independent estimates."""
    if not shot.value > 0:
        raise DomainError(f"shot-noise level must be positive, got {shot.value}")
    ratio = raw.value / shot.value
    return math.hypot(raw.stderr / shot.value, ratio * shot.stderr / shot.value)


def to_db(normalized: float) -> float:
    """Noise power relative to shot noise in dB (negative means squeezed)."""
    return 10.0 * math.log10(normalized)


def filtered_variance(traces, band: BandSpec) -> VarianceEstimate:
    """Band-pass every replicate of a TraceSet (or list of Trace) and pool."""
    traces = list(getattr(traces, "traces", traces))
    if not traces:
        raise DomainError("variance needs at least one trace")
    return variance_of_array(bandpass_array(_as_rows(traces), traces[0].dt, band))
