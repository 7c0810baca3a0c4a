"""Single- and two-mode covariance matrices in shot-noise units.

Quadratures follow the Stokes-angle convention: the quadrature at angle
``theta`` is ``X cos(theta) + P sin(theta)``, with ``theta`` increasing from
S2 towards S3.  Vacuum has unit variance in every quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

__all__ = [
    "AngleQuartet",
    "Cov2",
    "Cov4",
    "NoiseEllipse",
    "quadrature_variance",
    "single_mode_cov",
    "quartet_from_cov",
    "sum_rule_residual",
    "quartet_consistent",
    "rotate_cov",
    "noise_ellipse",
    "two_mode_cov",
    "direct_sum",
    "ISOTROPIC_TOL",
]

ISOTROPIC_TOL = 1e-12


class AngleQuartet(NamedTuple):
    """Normalised variances at base-pi/4, base, base+pi/4, base+pi/2."""

    m45: float
    z0: float
    p45: float
    p90: float


@dataclass(frozen=True)
class Cov2:
    xx: float
    xp: float
    pp: float

    @classmethod
    def from_matrix(cls, m) -> "Cov2":
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2):
            raise DomainError(f"expected a 2x2 matrix, got shape {m.shape}")
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    @classmethod
    def identity(cls) -> "Cov2":
        return cls(1.0, 0.0, 1.0)

    def as_array(self) -> np.ndarray:
        return np.array([[self.xx, self.xp], [self.xp, self.pp]])

    @property
    def det(self) -> float:
        return self.xx * self.pp - self.xp * self.xp

    @property
    def trace(self) -> float:
        return self.xx + self.pp

    @property
    def physical(self) -> bool:
        return self.xx > 0 and self.pp > 0 and self.det >= 1.0


@dataclass(frozen=True, eq=False)
class Cov4:
    """Two-mode covariance in the order (X_a, P_a, X_b, P_b)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise DomainError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("covariance has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - m.T)) > 1e-9 * scale:
            raise DomainError("covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Cov4":
        return cls(np.eye(4))

    @property
    def alpha(self) -> np.ndarray:
        return self.matrix[:2, :2]

    @property
    def beta(self) -> np.ndarray:
        return self.matrix[2:, 2:]

    @property
    def gamma(self) -> np.ndarray:
        return self.matrix[:2, 2:]

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix)

    def __eq__(self, other):
        if not isinstance(other, Cov4):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True)
class NoiseEllipse:
    var_min: float
    var_max: float
    theta_min: float
    isotropic: bool = False


def quadrature_variance(cov: Cov2, theta) -> np.ndarray:
    """Variance of ``X cos(theta) + P sin(theta)``."""
    c, s = np.cos(theta), np.sin(theta)
    return cov.xx * c * c + 2.0 * cov.xp * c * s + cov.pp * s * s


def single_mode_cov(quartet) -> Cov2:
    """Covariance from the four normalised quadrature variances.

    The off-diagonal is half the difference of the two diagonal-angle
    variances.
    """
    q = AngleQuartet(*quartet)
    if min(q) <= 0:
        raise DomainError(f"variances must be positive, got {tuple(q)}")
    return Cov2(q.z0, 0.5 * (q.p45 - q.m45), q.p90)


def quartet_from_cov(cov: Cov2) -> AngleQuartet:
    """Model variances at the four measurement angles (base angle 0)."""
    angles = (-math.pi / 4, 0.0, math.pi / 4, math.pi / 2)
    return AngleQuartet(*(float(quadrature_variance(cov, a)) for a in angles))


def sum_rule_residual(quartet) -> float:
    """``var(+pi/4) + var(-pi/4) - var(0) - var(pi/2)``; zero for any ellipse."""
    q = AngleQuartet(*quartet)
    return (q.p45 + q.m45) - (q.z0 + q.p90)


def quartet_consistent(quartet, stderrs=None, n_sigma: float = 3.0, atol: float = 1e-12) -> bool:
    """Data-quality gate on the quadrature sum rule."""
    resid = abs(sum_rule_residual(quartet))
    combined = math.sqrt(sum(e * e for e in stderrs)) if stderrs is not None else 0.0
    return resid <= n_sigma * combined + atol


def rotate_cov(cov: Cov2, phi: float) -> Cov2:
    """Express ``cov`` in the quadrature frame advanced by ``phi``.

    The new X is the old quadrature at angle ``phi``; i.e. ``M cov M^T``
    with ``M = [[cos, sin], [-sin, cos]]``.
    """
    c, s = math.cos(phi), math.sin(phi)
    m = np.array([[c, s], [-s, c]])
    return Cov2.from_matrix(m @ cov.as_array() @ m.T)


def _wrap_half_pi(theta: float) -> float:
    """Wrap into ``[-pi/2, pi/2)``."""
    t = math.fmod(theta + math.pi / 2, math.pi)
    if t < 0:
        t += math.pi
    t -= math.pi / 2
    return -math.pi / 2 if t >= math.pi / 2 else t


def noise_ellipse(cov: Cov2) -> NoiseEllipse:
    """Principal variances and the quadrature angle of least noise.

    ``theta_min`` is the angle at which :func:`quadrature_variance` is
    smallest, reported in ``[-pi/2, pi/2)``; an isotropic matrix reports 0.
    """
    half_diff = 0.5 * (cov.xx - cov.pp)
    mean = 0.5 * (cov.xx + cov.pp)
    radius = math.hypot(half_diff, cov.xp)
    var_max = mean + radius
    det = cov.det
    var_min = det / var_max if var_max != 0 else mean - radius
    isotropic = abs(cov.xx - cov.pp) < ISOTROPIC_TOL and abs(cov.xp) < ISOTROPIC_TOL
    if isotropic:
        theta = 0.0
    else:
        theta = _wrap_half_pi(0.5 * math.atan2(2.0 * cov.xp, cov.xx - cov.pp) + math.pi / 2)
    return NoiseEllipse(var_min, var_max, theta, isotropic)


def direct_sum(cov_a: Cov2, cov_b: Cov2) -> np.ndarray:
    m = np.zeros((4, 4))
    m[:2, :2] = cov_a.as_array()
    m[2:, 2:] = cov_b.as_array()
    return m


def two_mode_cov(cov_a: Cov2, cov_b: Cov2, cross) -> Cov4:
    """Assemble a two-mode covariance.

    ``cross[i][j]`` is the normalised covariance of quadrature ``i`` of mode a
    (X, P) with quadrature ``j`` of mode b.  It is placed above the diagonal
    and its transpose below, so the result is exactly symmetric.
    """
    gamma = np.asarray(cross, dtype=float)
    if gamma.shape != (2, 2):
        raise DomainError(f"cross block must be 2x2, got shape {gamma.shape}")
    m = direct_sum(cov_a, cov_b)
    m[:2, 2:] = gamma
    m[2:, :2] = gamma.T
    return Cov4(m)
