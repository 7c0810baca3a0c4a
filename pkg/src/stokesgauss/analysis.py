"""Per-point reconstruction pipelines behind the ``analyze-*`` commands.

Each sweep point is reduced to independent variance estimates (one per
filtered trace set plus the shot-noise levels).  Derived quantities are
pure functions of that vector, and their standard errors come from a
central-difference Jacobian, i.e. first-order propagation assuming
independent inputs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .covariance import (
    AngleQuartet,
    noise_ellipse,
    single_mode_cov,
    sum_rule_residual,
    two_mode_cov,
)
from .errors import DomainError
from .gaussianity import gaussianity_verdict, normalized_moments
from .signal_filter import (
    BandSpec,
    VarianceEstimate,
    bandpass_array,
    shot_noise_level,
    subtract_dark,
    variance_of_array,
)
from .symplectic import (
    DEFAULT_TOL,
    gaussian_discord,
    log_negativity,
    ppt_eigenvalues,
    symplectic_eigenvalues,
)
from .trace_io import ANGLE_KEYS, SweepDataset, SweepPoint, TraceSet, joint_key

__all__ = [
    "ChannelStats",
    "AnalysisResult",
    "propagate",
    "channel_stats",
    "analyze_single_point",
    "analyze_pair_point",
    "analyze_sweep",
    "wrap_angle",
]

SUM_RULE_SIGMA = 3.0
ANISOTROPY_SIGMA = 3.0
_JOINT = (("z0", "z0"), ("z0", "p90"), ("p90", "z0"), ("p90", "p90"))


def wrap_angle(theta: float) -> float:
    """Wrap into ``[-pi/2, pi/2)`` (ellipse axes are defined modulo pi)."""
    t = math.fmod(theta + math.pi / 2, math.pi)
    if t < 0:
        t += math.pi
    t -= math.pi / 2
    return -math.pi / 2 if t >= math.pi / 2 else t


def propagate(func: Callable, x: Sequence[float], sx: Sequence[float],
              periodic: Sequence[bool] = (), rel_step: float = 1e-6) -> np.ndarray:
    """First-order standard errors of ``func(x)`` for independent inputs.

    Outputs flagged in ``periodic`` are angles modulo pi; their differences
    are wrapped before differentiating.
    """
    x = np.asarray(x, dtype=float)
    sx = np.asarray(sx, dtype=float)
    f0 = np.atleast_1d(np.asarray(func(x), dtype=float))
    periodic = np.zeros(f0.size, bool) if not len(periodic) else np.asarray(periodic, bool)
    var = np.zeros(f0.size)
    for i in range(x.size):
        if sx[i] == 0:
            continue
        h = rel_step * max(abs(x[i]), 1e-12)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        diff = np.atleast_1d(np.asarray(func(xp), float)) - np.atleast_1d(np.asarray(func(xm), float))
        diff = np.where(periodic, np.vectorize(wrap_angle)(diff), diff) if periodic.any() else diff
        var += (diff / (2 * h) * sx[i]) ** 2
    return np.sqrt(var)


@dataclass(frozen=True)
class ChannelStats:
    """Filtered-variance summary of one trace set."""

    variance: VarianceEstimate
    offset: float
    filtered: np.ndarray = field(repr=False, compare=False)


def channel_stats(ts: TraceSet, band: BandSpec,
                  dark: Optional[VarianceEstimate] = None) -> ChannelStats:
    rows = ts.as_array()
    filtered = bandpass_array(rows, ts.dt, band)
    est = subtract_dark(variance_of_array(filtered), dark)
    return ChannelStats(est, float(rows.mean()), filtered)


@dataclass
class AnalysisResult:
    """Outcome for one sweep point; serialised field-for-field into JSON."""

    detuning: float
    mode: str
    discarded: bool = False
    reason: Optional[str] = None
    variances: dict = field(default_factory=dict)
    shot: dict = field(default_factory=dict)
    cov: Optional[list] = None
    cov_stderr: Optional[list] = None
    ellipse: Optional[dict] = None
    sum_rule: Optional[dict] = None
    symplectic: Optional[dict] = None
    gaussianity: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "detuning_ghz": self.detuning,
            "mode": self.mode,
            "discarded": self.discarded,
            "reason": self.reason,
            "variances": self.variances,
            "shot": self.shot,
            "cov": self.cov,
            "cov_stderr": self.cov_stderr,
            "ellipse": self.ellipse,
            "sum_rule": self.sum_rule,
            "symplectic": self.symplectic,
            "gaussianity": self.gaussianity,
        }


def _variance_entry(stats: ChannelStats, shot: VarianceEstimate) -> dict:
    v = stats.variance
    return {
        "raw": v.value,
        "raw_stderr": v.stderr,
        "normalized": v.value / shot.value,
        "normalized_stderr": math.hypot(v.stderr / shot.value,
                                        v.value * shot.stderr / shot.value**2),
        "offset_removed": stats.offset,
    }


def _gaussianity(stats: dict) -> dict:
    out, passed = {}, True
    for key, st in stats.items():
        try:
            rep = normalized_moments(st.filtered)
        except DomainError as exc:
            out[key] = {"passed": False, "error": str(exc)}
            passed = False
            continue
        verdict = gaussianity_verdict(rep)
        passed &= verdict.passed
        out[key] = {
            "passed": verdict.passed,
            "failed_orders": list(verdict.failed_orders),
            "normalized": list(rep.normalized),
            "stderr": list(rep.stderr),
        }
    return {"passed": passed, "channels": out}


def _cov2_from_vector(x):
    """x = (m45, z0, p45, p90, shot) raw -> Cov2 in shot units."""
    return single_mode_cov(AngleQuartet(*(np.asarray(x[:4]) / x[4])))


def _ellipse_vector(x, base_theta):
    ell = noise_ellipse(_cov2_from_vector(x))
    return np.array([ell.var_min, ell.var_max, wrap_angle(ell.theta_min + base_theta)])


def analyze_single_point(point: SweepPoint, band: BandSpec, base_theta: float = 0.0,
                         dark: Optional[VarianceEstimate] = None,
                         gaussianity: bool = True) -> AnalysisResult:
    """Covariance and noise ellipse of beam a.

    ``theta_min_rad`` is absolute (base angle added back).  ``theta_defined``
    is false when the principal variances are not separated by more than
    three standard errors.
    """
    res = AnalysisResult(point.detuning, "single")
    shot = shot_noise_level(point.shot_a, band, dark)
    if not shot.value > 0:
        raise DomainError(f"shot-noise level must be positive, got {shot.value}")
    stats = {k: channel_stats(point.beam_a[k], band, dark) for k in ANGLE_KEYS}
    res.shot = {"a": {"value": shot.value, "stderr": shot.stderr}}
    res.variances = {"a": {k: _variance_entry(stats[k], shot) for k in ANGLE_KEYS}}

    x = np.array([stats[k].variance.value for k in ANGLE_KEYS] + [shot.value])
    sx = np.array([stats[k].variance.stderr for k in ANGLE_KEYS] + [shot.stderr])
    cov = _cov2_from_vector(x)
    cov_err = propagate(lambda v: _cov2_from_vector(v).as_array().ravel(), x, sx)
    res.cov = cov.as_array().tolist()
    res.cov_stderr = cov_err.reshape(2, 2).tolist()

    ell = noise_ellipse(cov)
    theta_abs = wrap_angle(ell.theta_min + base_theta)
    err = propagate(lambda v: _ellipse_vector(v, base_theta), x, sx, periodic=(False, False, True))
    split_err = propagate(lambda v: np.diff(_ellipse_vector(v, 0.0)[:2]), x, sx)[0]
    theta_defined = (not ell.isotropic) and (ell.var_max - ell.var_min) > ANISOTROPY_SIGMA * split_err
    res.ellipse = {
        "var_min": ell.var_min,
        "var_max": ell.var_max,
        "theta_min_rad": theta_abs,
        "var_min_stderr": float(err[0]),
        "var_max_stderr": float(err[1]),
        "theta_min_stderr": float(err[2]),
        "theta_defined": bool(theta_defined),
        "var_min_db": 10 * math.log10(ell.var_min) if ell.var_min > 0 else None,
        "det": cov.det,
    }

    q = AngleQuartet(*(x[:4] / x[4]))
    resid = sum_rule_residual(q)
    resid_err = float(propagate(lambda v: sum_rule_residual(v[:4] / v[4]), x, sx)[0])
    res.sum_rule = {
        "residual": resid,
        "stderr": resid_err,
        "consistent": abs(resid) <= SUM_RULE_SIGMA * resid_err + 1e-12,
    }
    if gaussianity:
        res.gaussianity = _gaussianity(stats)
    return res


def _cov4_from_vector(x):
    """x = 4 raw a-variances, 4 raw b-variances, 8 joint (sum, diff) pairs, shot_a, shot_b."""
    sa, sb = x[16], x[17]
    cov_a = single_mode_cov(AngleQuartet(*(np.asarray(x[0:4]) / sa)))
    cov_b = single_mode_cov(AngleQuartet(*(np.asarray(x[4:8]) / sb)))
    norm = math.sqrt(sa * sb)
    cross = np.zeros((2, 2))
    idx = {"z0": 0, "p90": 1}
    for n, (ka, kb) in enumerate(_JOINT):
        v_sum, v_diff = x[8 + 2 * n], x[9 + 2 * n]
        cross[idx[ka], idx[kb]] = (v_sum - v_diff) / 4.0 / norm
    return two_mode_cov(cov_a, cov_b, cross)


def _spectrum_vector(x):
    cov = _cov4_from_vector(x)
    nu_m, nu_p = symplectic_eigenvalues(cov, check=False)
    nt_m, nt_p = ppt_eigenvalues(cov, check=False)
    return np.array([nu_m, nu_p, nt_m, nt_p, log_negativity((nt_m, nt_p))])


def analyze_pair_point(point: SweepPoint, band: BandSpec, base_theta: float = 0.0,
                       dark: Optional[VarianceEstimate] = None, tol: float = DEFAULT_TOL,
                       n_sigma: float = 3.0, discord: bool = True, seed: int = 0,
                       gaussianity: bool = False) -> AnalysisResult:
    """Two-mode covariance and its symplectic quantifiers.

    The point is discarded (reason ``"inconsistent"``) when
    ``nu_minus < 1 - tol - n_sigma * stderr(nu_minus)``; discarded points
    carry no quantifiers.  Entanglement is claimed only when
    ``nu_tilde_minus < 1 - tol - n_sigma * stderr(nu_tilde_minus)``, and the
    logarithmic negativity is zero otherwise.  Discord is floored at zero;
    the unfloored value is kept as ``discord_b_raw``.
    """
    if not point.two_beam or not point.joint:
        raise DomainError("pair analysis needs beam_b, shot_b and joint channels")
    res = AnalysisResult(point.detuning, "pair")
    shot_a = shot_noise_level(point.shot_a, band, dark)
    shot_b = shot_noise_level(point.shot_b, band, dark)
    for s in (shot_a, shot_b):
        if not s.value > 0:
            raise DomainError(f"shot-noise level must be positive, got {s.value}")
    st_a = {k: channel_stats(point.beam_a[k], band, dark) for k in ANGLE_KEYS}
    st_b = {k: channel_stats(point.beam_b[k], band, dark) for k in ANGLE_KEYS}
    joint = {}
    for ka, kb in _JOINT:
        for kind in ("sum", "diff"):
            key = joint_key(kind, ka, kb)
            if key not in point.joint:
                raise DomainError(f"joint channel {key} is missing")
            # Electronic noise cancels in sum minus difference.
            joint[key] = channel_stats(point.joint[key], band)
    res.shot = {
        "a": {"value": shot_a.value, "stderr": shot_a.stderr},
        "b": {"value": shot_b.value, "stderr": shot_b.stderr},
    }
    res.variances = {
        "a": {k: _variance_entry(st_a[k], shot_a) for k in ANGLE_KEYS},
        "b": {k: _variance_entry(st_b[k], shot_b) for k in ANGLE_KEYS},
        "joint": {k: {"raw": v.variance.value, "raw_stderr": v.variance.stderr}
                  for k, v in joint.items()},
    }
    ests = ([st_a[k].variance for k in ANGLE_KEYS] + [st_b[k].variance for k in ANGLE_KEYS]
            + [joint[joint_key(kind, ka, kb)].variance for ka, kb in _JOINT
               for kind in ("sum", "diff")]
            + [shot_a, shot_b])
    x = np.array([e.value for e in ests])
    sx = np.array([e.stderr for e in ests])
    cov = _cov4_from_vector(x)
    res.cov = cov.as_array().tolist()
    res.cov_stderr = propagate(lambda v: _cov4_from_vector(v).matrix.ravel(), x, sx).reshape(4, 4).tolist()

    try:
        spec = _spectrum_vector(x)
        spec_err = propagate(_spectrum_vector, x, sx)
        symplectic_eigenvalues(cov)
        ppt_eigenvalues(cov)
    except ArithmeticError as exc:
        res.discarded = True
        res.reason = "inconsistent"
        res.symplectic = {"consistent": False, "detail": str(exc)}
        return res

    nu_m, nu_p, nt_m, nt_p, _ = spec
    nu_err = float(spec_err[0])
    threshold = 1.0 - tol - n_sigma * nu_err
    consistent = bool(nu_m >= threshold)
    if not consistent:
        res.discarded = True
        res.reason = "inconsistent"
        res.symplectic = {
            "consistent": False,
            "nu_minus": float(nu_m),
            "nu_minus_stderr": nu_err,
            "threshold": threshold,
        }
        return res

    ent_threshold = 1.0 - tol - n_sigma * float(spec_err[2])
    entangled = bool(nt_m < ent_threshold)
    ln = log_negativity((nt_m, nt_p)) if entangled else 0.0
    disc = raw_disc = None
    if discord:
        # Noisy matrices that pass the widened gate can give slightly negative values.
        raw_disc = gaussian_discord(cov, seed=seed, consistency_tol=tol, stderr=n_sigma * nu_err)
        disc = max(raw_disc, 0.0)
    res.symplectic = {
        "consistent": True,
        "nu_minus": float(nu_m),
        "nu_plus": float(nu_p),
        "nu_minus_stderr": nu_err,
        "nu_plus_stderr": float(spec_err[1]),
        "nu_tilde_minus": float(nt_m),
        "nu_tilde_plus": float(nt_p),
        "mpte_stderr": float(spec_err[2]),
        "entangled": entangled,
        "entanglement_threshold": ent_threshold,
        "log_negativity": float(ln),
        "log_negativity_stderr": float(spec_err[4]) if entangled else 0.0,
        "discord_b": None if disc is None else float(disc),
        "discord_b_raw": None if raw_disc is None else float(raw_disc),
        "log_base": 2,
    }
    if gaussianity:
        res.gaussianity = _gaussianity({**{f"a_{k}": v for k, v in st_a.items()},
                                        **{f"b_{k}": v for k, v in st_b.items()}})
    return res


def analyze_sweep(dataset: SweepDataset, mode: str, band: Optional[BandSpec] = None,
                  jobs: int = 1, dark: Optional[VarianceEstimate] = None, **kwargs) -> list:
    """Analyse every point; failures are isolated per point.

    Results come back in sweep order regardless of ``jobs``.
    """
    m = dataset.manifest
    band = band or BandSpec(m.omega, m.bandwidth)
    func = {"single": analyze_single_point, "pair": analyze_pair_point}[mode]

    def run(point):
        try:
            return func(point, band, m.base_theta, dark, **kwargs)
        except (DomainError, ArithmeticError, ValueError) as exc:
            return AnalysisResult(point.detuning, mode, discarded=True,
                                  reason=f"error: {exc}")

    if jobs <= 1:
        return [run(p) for p in dataset.points]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, dataset.points))
