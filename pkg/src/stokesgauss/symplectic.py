"""Symplectic analysis of two-mode covariance matrices.

Everything here works in shot-noise units (vacuum covariance = identity),
so a physical state has both symplectic eigenvalues >= 1.  Logarithms are
base 2: log-negativity is in ebits and discord in bits.

Closed forms are expressed through the local symplectic invariants
``A = det(alpha)``, ``B = det(beta)``, ``C = det(gamma)`` and
``D = det(sigma)``.  The generic route, ``|eig(i Omega sigma)|``, is used
as an independent cross-check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .covariance import Cov4
from .errors import ConvergenceError, DomainError, NumericalConsistencyError

__all__ = [
    "SymplecticInvariants",
    "SymplecticReport",
    "OMEGA",
    "as_matrix",
    "invariants",
    "symplectic_eigenvalues",
    "symplectic_eigenvalues_closed",
    "symplectic_eigenvalues_generic",
    "partial_transpose",
    "swap_modes",
    "consistency_check",
    "ppt_eigenvalues",
    "log_negativity",
    "entropy_function",
    "conditional_det",
    "discord_search",
    "discord_closed_form",
    "gaussian_discord",
    "symplectic_report",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-6
LAMBDA_MIN, LAMBDA_MAX = 1e-6, 1e6
_LOG_LAMBDA = (math.log(LAMBDA_MIN), math.log(LAMBDA_MAX))
# Internal agreement demanded of the two eigenvalue routes; degenerate
# spectra cost both routes roughly sqrt(machine eps).
_ROUTE_RTOL = 1e-6
# Relative discriminant below which the closed form is round-off dominated.
_DEGENERATE = 1e-8

_J = np.array([[0.0, 1.0], [-1.0, 0.0]])
OMEGA = np.block([[_J, np.zeros((2, 2))], [np.zeros((2, 2)), _J]])
_PT = np.diag([1.0, 1.0, 1.0, -1.0])
_SWAP = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)


@dataclass(frozen=True)
class SymplecticInvariants:
    A: float
    B: float
    C: float
    D: float

    @property
    def delta(self) -> float:
        return self.A + self.B + 2.0 * self.C

    @property
    def delta_pt(self) -> float:
        return self.A + self.B - 2.0 * self.C


@dataclass(frozen=True)
class SymplecticReport:
    nu_minus: float
    nu_plus: float
    nu_tilde_minus: float
    nu_tilde_plus: float
    consistent: bool
    entangled: bool
    log_negativity: float
    discord_b: Optional[float]
    invariants: SymplecticInvariants


def as_matrix(cov) -> np.ndarray:
    m = cov.matrix if isinstance(cov, Cov4) else np.asarray(cov, dtype=float)
    if m.shape != (4, 4):
        raise DomainError(f"expected a 4x4 covariance, got shape {m.shape}")
    return m


def _perm_sign(perm) -> int:
    sign = 1
    for i, j in itertools.combinations(range(len(perm)), 2):
        if perm[i] > perm[j]:
            sign = -sign
    return sign


_PERMS4 = [(p, _perm_sign(p)) for p in itertools.permutations(range(4))]


def _det2(m) -> float:
    return math.fsum((m[0, 0] * m[1, 1], -m[0, 1] * m[1, 0]))


def _det4(m) -> float:
    # Leibniz expansion with an exact sum: a pure state's D = 1 stays 1, which
    # keeps sqrt(Delta^2 - 4D) from amplifying round-off.
    rows = m.tolist()
    return math.fsum(
        sign * rows[0][p[0]] * rows[1][p[1]] * rows[2][p[2]] * rows[3][p[3]]
        for p, sign in _PERMS4
    )


def invariants(cov) -> SymplecticInvariants:
    m = as_matrix(cov)
    return SymplecticInvariants(
        _det2(m[:2, :2]), _det2(m[2:, 2:]), _det2(m[:2, 2:]), _det4(m)
    )


def _nu_pair(delta: float, det: float):
    disc = delta * delta - 4.0 * det
    if disc < 0:
        if disc < -1e-9 * max(delta * delta, 1.0):
            raise NumericalConsistencyError(
                f"Delta^2 - 4D = {disc:g} < 0: matrix is not a physical covariance"
            )
        disc = 0.0
    nu_plus_sq = 0.5 * (delta + math.sqrt(disc))
    if not nu_plus_sq > 0 or det < 0:
        raise NumericalConsistencyError(
            f"invariants Delta={delta:g}, D={det:g} give no real symplectic spectrum"
        )
    # Product form avoids cancellation when nu_minus << nu_plus.
    nu_minus_sq = det / nu_plus_sq
    return math.sqrt(nu_minus_sq), math.sqrt(nu_plus_sq), disc


def symplectic_eigenvalues_generic(cov):
    """``(nu_minus, nu_plus)`` from the moduli of ``eig(i Omega sigma)``."""
    m = as_matrix(cov)
    ev = np.sort(np.abs(np.linalg.eigvals(1j * OMEGA @ m)))
    return float(0.5 * (ev[0] + ev[1])), float(0.5 * (ev[2] + ev[3]))


def _symplectic_hermitian(m: np.ndarray):
    """Spectrum via the Hermitian form ``i sigma^1/2 Omega sigma^1/2``, or None
    if ``m`` is not positive definite."""
    w, v = np.linalg.eigh(m)
    if w[0] <= 0:
        return None
    root = (v * np.sqrt(w)) @ v.T
    ev = np.linalg.eigvalsh(1j * root @ OMEGA @ root)
    return float(ev[2]), float(ev[3])


def _checked(closed, generic, what):
    for c, g in zip(closed, generic):
        if abs(c - g) > _ROUTE_RTOL * max(abs(c), abs(g), 1e-300):
            raise NumericalConsistencyError(
                f"{what}: closed form {closed} disagrees with generic route {generic}"
            )
    return closed


def _spectrum(m: np.ndarray, delta: float, det: float, check: bool, what: str):
    nu_minus, nu_plus, disc = _nu_pair(delta, det)
    if check:
        _checked((nu_minus, nu_plus), symplectic_eigenvalues_generic(m), what)
    if disc <= _DEGENERATE * delta * delta:
        # sqrt(disc) turns round-off in D into ~sqrt(eps) errors here, while the
        # Hermitian form stays Lipschitz in the matrix entries.
        herm = _symplectic_hermitian(m)
        if herm is not None:
            return herm
    return nu_minus, nu_plus


def symplectic_eigenvalues_closed(cov):
    """Bare closed form ``nu^2 = (Delta +- sqrt(Delta^2 - 4D)) / 2``,
    ``Delta = A + B + 2C``, without cross-checks or refinements."""
    inv = invariants(cov)
    return _nu_pair(inv.delta, inv.D)[:2]


def symplectic_eigenvalues(cov, check: bool = True):
    """Williamson eigenvalues ``(nu_minus, nu_plus)`` from the invariants.

    Uses the closed form of :func:`symplectic_eigenvalues_closed`.  With
    ``check`` the result is compared against ``|eig(i Omega sigma)|`` and a
    :class:`NumericalConsistencyError` raised if they disagree beyond 1e-6.
    For a nearly degenerate spectrum (``Delta^2 - 4D`` at round-off level),
    where the closed form loses half its digits, the values are taken from
    the Hermitian eigenproblem instead.
    """
    m = as_matrix(cov)
    inv = invariants(m)
    return _spectrum(m, inv.delta, inv.D, check, "symplectic eigenvalues")


def partial_transpose(cov) -> np.ndarray:
    """Flip the sign of ``P_b`` (time reversal of mode b)."""
    m = as_matrix(cov)
    return _PT @ m @ _PT


def swap_modes(cov) -> np.ndarray:
    m = as_matrix(cov)
    return _SWAP @ m @ _SWAP


def ppt_eigenvalues(cov, check: bool = True):
    """Symplectic eigenvalues of the partial transpose, ``(nu~_minus, nu~_plus)``.

    Same closed form as :func:`symplectic_eigenvalues` with
    ``Delta~ = A + B - 2C``; the check runs the generic route on the
    explicitly transposed matrix.
    """
    m = as_matrix(cov)
    inv = invariants(m)
    return _spectrum(partial_transpose(m), inv.delta_pt, inv.D, check,
                     "partial-transpose eigenvalues")


def consistency_check(cov, tol: float = DEFAULT_TOL, stderr: float = 0.0) -> bool:
    """True iff ``nu_minus >= 1 - tol - stderr``.

    ``stderr`` is the statistical uncertainty of ``nu_minus`` for measured
    matrices; it widens the acceptance band.  Matrices whose spectrum cannot
    be evaluated are reported as inconsistent.
    """
    try:
        nu_minus, _ = symplectic_eigenvalues(cov)
    except (NumericalConsistencyError, np.linalg.LinAlgError):
        return False
    return nu_minus >= 1.0 - tol - stderr


def log_negativity(ppt) -> float:
    """``-sum(log2(nu))`` over partial-transpose eigenvalues below 1."""
    nus = tuple(ppt)
    if any(not nu > 0 for nu in nus):
        raise DomainError(f"eigenvalues must be positive, got {nus}")
    return float(-sum(math.log2(nu) for nu in nus if nu < 1.0))


def entropy_function(x: float) -> float:
    """Von Neumann entropy (bits) of a single-mode thermal state of
    symplectic eigenvalue ``x``.

    Arguments a hair below 1 (within 1e-9) are treated as 1.
    """
    if x < 1.0:
        if x < 1.0 - 1e-9:
            raise DomainError(f"entropy function needs x >= 1, got {x}")
        return 0.0
    if x == 1.0:
        return 0.0
    hp, hm = 0.5 * (x + 1.0), 0.5 * (x - 1.0)
    return hp * math.log2(hp) - hm * math.log2(hm)


def _entropy_clamped(x: float) -> float:
    return entropy_function(max(x, 1.0))


def _measurement_cov(log_lam, phi):
    lam = np.exp(np.clip(log_lam, *_LOG_LAMBDA))
    c, s = np.cos(phi), np.sin(phi)
    inv = 1.0 / lam
    return (lam * c * c + inv * s * s, (lam - inv) * c * s, lam * s * s + inv * c * c)


def conditional_det(cov, log_lam, phi):
    """``det(alpha - gamma (beta + sigma_m)^-1 gamma^T)`` for the pure
    measurement covariance ``sigma_m = R(phi) diag(lam, 1/lam) R(phi)^T``.

    Broadcasts over ``log_lam`` and ``phi``.
    """
    m = as_matrix(cov)
    a, g, b = m[:2, :2], m[:2, 2:], m[2:, 2:]
    sxx, sxp, spp = _measurement_cov(np.asarray(log_lam, float), np.asarray(phi, float))
    mxx, mxp, mpp = b[0, 0] + sxx, b[0, 1] + sxp, b[1, 1] + spp
    det_m = mxx * mpp - mxp * mxp
    # (beta + sigma_m)^-1 = adj / det
    ixx, ixp, ipp = mpp / det_m, -mxp / det_m, mxx / det_m

    def quad(u, v):
        return u[0] * v[0] * ixx + (u[0] * v[1] + u[1] * v[0]) * ixp + u[1] * v[1] * ipp

    exx = a[0, 0] - quad(g[0], g[0])
    exp_ = a[0, 1] - quad(g[0], g[1])
    epp = a[1, 1] - quad(g[1], g[1])
    return exx * epp - exp_ * exp_


def _grid_minimum(cov, seed, n_log_lam, n_phi):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    jitter = rng.random(2)
    lo, hi = _LOG_LAMBDA
    step_l = (hi - lo) / (n_log_lam - 1)
    step_p = math.pi / n_phi
    ll = np.clip(lo + step_l * (np.arange(n_log_lam) + jitter[0] - 0.5), lo, hi)
    pp = step_p * (np.arange(n_phi) + jitter[1])
    grid_l, grid_p = np.meshgrid(ll, pp, indexing="ij")
    values = conditional_det(cov, grid_l, grid_p).ravel()
    return grid_l.ravel(), grid_p.ravel(), values


def discord_search(cov, tol: float = 1e-10, seed: int = 0, n_log_lam: int = 57,
                   n_phi: int = 36, n_starts: int = 3):
    """Minimise the conditional determinant over pure Gaussian measurements on b.

    A jittered coarse grid over ``(log lambda, phi)`` (jitter drawn from
    ``seed``) seeds ``n_starts`` Nelder-Mead refinements; ties are broken by
    lowest grid index so the result does not depend on evaluation order.
    Returns ``(det_min, log_lambda, phi)``.
    """
    gl, gp, values = _grid_minimum(cov, seed, n_log_lam, n_phi)
    if not np.any(np.isfinite(values)):
        raise ConvergenceError("objective is not finite anywhere on the grid")
    order = np.lexsort((np.arange(values.size), np.where(np.isfinite(values), values, np.inf)))
    best = (float(values[order[0]]), float(gl[order[0]]), float(gp[order[0]]))
    attempts = []

    def objective(x):
        return float(conditional_det(cov, x[0], x[1]))

    for idx in order[:n_starts]:
        res = minimize(
            objective,
            x0=[gl[idx], gp[idx]],
            method="Nelder-Mead",
            bounds=[_LOG_LAMBDA, (None, None)],
            options={"xatol": 1e-9, "fatol": tol, "maxiter": 4000},
        )
        attempts.append((bool(res.success), float(res.fun), int(res.nit)))
        if res.success and res.fun < best[0]:
            best = (float(res.fun), float(res.x[0]), float(res.x[1]) % math.pi)
    if not any(ok for ok, _, _ in attempts):
        raise ConvergenceError(
            "local refinement did not converge",
            {"attempts": attempts, "grid_best": best},
        )
    return best


def discord_closed_form(cov) -> float:
    """Minimal conditional determinant from the invariants alone.

    Closed form for the optimum over Gaussian measurements on mode b, in
    vacuum-normalised units; used as a fast path and as a cross-check of
    :func:`discord_search`.
    """
    inv = invariants(cov)
    A, B, C, D = inv.A, inv.B, inv.C, inv.D
    if abs(B - 1.0) < 1e-12:
        return A
    if (D - A * B) ** 2 <= (1.0 + B) * C * C * (A + D):
        root = math.sqrt(max(C * C + (B - 1.0) * (D - A), 0.0))
        return (2.0 * C * C + (B - 1.0) * (D - A) + 2.0 * abs(C) * root) / (B - 1.0) ** 2
    root = math.sqrt(max(C**4 + (D - A * B) ** 2 - 2.0 * C * C * (A * B + D), 0.0))
    return (A * B - C * C + D - root) / (2.0 * B)


def gaussian_discord(cov, tol: float = 1e-10, *, seed: int = 0, swap: bool = False,
                     method: str = "search", consistency_tol: float = DEFAULT_TOL,
                     stderr: float = 0.0) -> float:
    """Gaussian discord ``D(a|b)`` in bits, measurements on mode b.

    ``D = f(sqrt B) - f(nu_-) - f(nu_+) + min f(sqrt det eps)`` where the
    minimum runs over pure single-mode Gaussian measurements on b.  ``method``
    is ``"search"`` (numerical minimisation, the reference) or ``"closed"``
    (invariant formula).  ``swap=True`` gives ``D(b|a)``.  Symplectic
    eigenvalues lying below 1 within the consistency tolerance are clamped
    to 1.
    """
    m = swap_modes(cov) if swap else as_matrix(cov)
    if not consistency_check(m, consistency_tol, stderr):
        raise DomainError("discord requires a consistent (physical) covariance matrix")
    inv = invariants(m)
    nu_minus, nu_plus = symplectic_eigenvalues(m)
    if method == "search":
        det_min = discord_search(m, tol=tol, seed=seed)[0]
    elif method == "closed":
        det_min = discord_closed_form(m)
    else:
        raise ValueError(f"unknown discord method {method!r}")
    return (
        _entropy_clamped(math.sqrt(max(inv.B, 0.0)))
        - _entropy_clamped(nu_minus)
        - _entropy_clamped(nu_plus)
        + _entropy_clamped(math.sqrt(max(det_min, 0.0)))
    )


def symplectic_report(cov, tol: float = DEFAULT_TOL, stderr: float = 0.0,
                      discord: bool = True, discord_method: str = "search",
                      seed: int = 0) -> SymplecticReport:
    """All two-mode quantifiers; ``discord_b`` is ``None`` when inconsistent."""
    inv = invariants(cov)
    nu_minus, nu_plus = symplectic_eigenvalues(cov)
    nt_minus, nt_plus = ppt_eigenvalues(cov)
    consistent = nu_minus >= 1.0 - tol - stderr
    entangled = nt_minus < 1.0 - tol
    ln = log_negativity((nt_minus, nt_plus)) if entangled else 0.0
    disc = None
    if discord and consistent:
        disc = gaussian_discord(cov, method=discord_method, seed=seed,
                                consistency_tol=tol, stderr=stderr)
    return SymplecticReport(
        nu_minus=nu_minus,
        nu_plus=nu_plus,
        nu_tilde_minus=nt_minus,
        nu_tilde_plus=nt_plus,
        consistent=consistent,
        entangled=entangled,
        log_negativity=ln,
        discord_b=disc,
        invariants=inv,
    )
