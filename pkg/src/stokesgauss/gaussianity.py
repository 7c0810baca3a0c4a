"""Empirical checks that detector fluctuations are Gaussian.

Two screens are provided: a normalised histogram to compare against a
Gaussian of equal variance, and the normalised moments

    m_p = <x^p> / (<x^2>^(p/2) (p-1)!!) - eps_p,   eps_p = 1 (p even), 0 (p odd)

which all vanish for a Gaussian.  Neither is a formal hypothesis test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Histogram",
    "MomentReport",
    "Verdict",
    "histogram",
    "gaussian_reference",
    "double_factorial",
    "normalized_moments",
    "gaussianity_verdict",
    "DEFAULT_P_MAX",
    "DEFAULT_EVEN_TOL",
    "DEFAULT_ODD_SIGMA",
]

DEFAULT_P_MAX = 6
DEFAULT_EVEN_TOL = 0.08
DEFAULT_ODD_SIGMA = 3.0
MIN_BLOCKS = 10
MIN_SAMPLES = 100
# Narrow bands can make odd moments vanish identically; compare round-off against a floor.
ODD_ATOL = 1e-12


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    degenerate: bool = False

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def area(self) -> float:
        return float(np.sum(self.density * np.diff(self.bin_edges)))


@dataclass(frozen=True)
class MomentReport:
    orders: tuple
    normalized: tuple
    stderr: tuple
    n_blocks: int = 0

    def __getitem__(self, p):
        return self.normalized[self.orders.index(p)]


@dataclass(frozen=True)
class Verdict:
    passed: bool
    failed_orders: tuple = field(default_factory=tuple)

    def __bool__(self):
        return self.passed


def histogram(samples, n_bins: int) -> Histogram:
    """Equal-width histogram over ``[min, max]`` with a unit-area density.

    If all samples coincide, a single bin of tiny width centred on the value
    is returned with ``degenerate=True``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("histogram needs at least one sample")
    if int(n_bins) != n_bins or n_bins < 1:
        raise DomainError(f"n_bins must be a positive integer, got {n_bins!r}")
    lo, hi = float(x.min()), float(x.max())
    degenerate = lo == hi
    if degenerate:
        half = max(abs(lo) * 1e-12, 1e-12)
        edges = np.array([lo - half, lo + half])
        counts = np.array([x.size])
    else:
        counts, edges = np.histogram(x, bins=int(n_bins), range=(lo, hi))
    density = counts / (x.size * np.diff(edges))
    return Histogram(edges, counts, density, degenerate)


def gaussian_reference(variance: float, mean: float, xs) -> np.ndarray:
    """Normal density with the given mean and variance evaluated at ``xs``."""
    if not variance > 0:
        raise DomainError(f"variance must be positive, got {variance}")
    xs = np.asarray(xs, dtype=float)
    return np.exp(-((xs - mean) ** 2) / (2 * variance)) / math.sqrt(2 * math.pi * variance)


def double_factorial(n: int) -> int:
    if n <= 0:
        return 1
    return math.prod(range(n, 0, -2))


def _moments(x: np.ndarray, orders) -> np.ndarray:
    m2 = np.mean(x * x)
    if not m2 > 0:
        raise DomainError("second moment is zero; normalised moments undefined")
    out = []
    for p in orders:
        mp = np.mean(x**p)
        eps = 1.0 if p % 2 == 0 else 0.0
        out.append(mp / (m2 ** (p / 2) * double_factorial(p - 1)) - eps)
    return np.array(out)


def normalized_moments(samples, p_max: int = DEFAULT_P_MAX) -> MomentReport:
    """Normalised moments of orders ``1..p_max`` with block standard errors.

    ``samples`` is either a flat array or a ``(n_traces, n_samples)`` array
    of replicate records.  With at least 10 replicates each record is one
    block; otherwise the pooled samples are cut into 10 contiguous blocks.
    The standard error is the scatter of per-block values over ``sqrt(n_blocks)``.
    Moments are taken about zero: inputs are expected to be band-pass
    filtered and hence zero-mean.
    """
    if p_max < 2:
        raise DomainError(f"p_max must be at least 2, got {p_max}")
    data = np.asarray(samples, dtype=float)
    flat = data.ravel()
    if flat.size < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples, got {flat.size}")
    orders = tuple(range(1, p_max + 1))
    values = _moments(flat, orders)
    if data.ndim == 2 and data.shape[0] >= MIN_BLOCKS:
        blocks = list(data)
    else:
        blocks = np.array_split(flat, MIN_BLOCKS)
    per_block = np.array([_moments(b, orders) for b in blocks])
    stderr = per_block.std(axis=0, ddof=1) / math.sqrt(len(blocks))
    # p = 2 is zero by construction; drop round-off.
    values[1] = 0.0
    stderr[1] = 0.0
    return MomentReport(orders, tuple(float(v) for v in values),
                        tuple(float(s) for s in stderr), len(blocks))


def gaussianity_verdict(report: MomentReport, even_tol: float = DEFAULT_EVEN_TOL,
                        odd_sigma: float = DEFAULT_ODD_SIGMA) -> Verdict:
    """Pass iff even moments are within ``even_tol`` of zero and odd moments
    within ``odd_sigma`` standard errors of zero."""
    failed = []
    for p, value, err in zip(report.orders, report.normalized, report.stderr):
        if p % 2 == 0:
            ok = abs(value) <= even_tol
        else:
            ok = abs(value) <= odd_sigma * err + ODD_ATOL
        if not ok:
            failed.append(p)
    return Verdict(not failed, tuple(failed))
