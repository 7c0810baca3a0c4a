"""Synthetic Gaussian states and the detector traces they would produce.

The generator inverts the measurement chain: white Gaussian streams are
coloured by the Cholesky factor of the state covariance, projected onto the
measured quadrature (or sum/difference of two quadratures), band-pass
filtered, and rescaled so that a vacuum channel has in-band variance equal to
the shot level.  Every channel draws from its own Philox substream keyed by
``(seed, point index, channel id)``, so output is independent of the order in
which channels or points are generated.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .covariance import Cov2, Cov4, direct_sum, noise_ellipse, rotate_cov
from .errors import DomainError
from .signal_filter import BandSpec, band_mask, bandpass_array
from .symplectic import consistency_check, symplectic_eigenvalues
from .trace_io import (
    ANGLE_KEYS,
    ANGLE_OFFSETS,
    Manifest,
    ShotNoiseRecord,
    SweepDataset,
    SweepPoint,
    TraceSet,
    joint_key,
    write_manifest,
    write_trace_file,
)

__all__ = [
    "STATE_KINDS",
    "JOINT_PAIRS",
    "PRNG_NAME",
    "StateSpec",
    "SynthRun",
    "squeezed_cov",
    "tmsv_cov",
    "beamsplit",
    "sample_traces",
    "synth_sweep",
    "truth_record",
]

STATE_KINDS = ("vacuum", "squeezed", "tmsv", "beamsplit_squeezed", "custom")
PRNG_NAME = "numpy Philox4x64-10 via SeedSequence(seed, spawn_key=(point, channel))"

# Angle pairs (mode a key, mode b key) whose sum/difference give the cross block.
JOINT_PAIRS = (("z0", "z0"), ("z0", "p90"), ("p90", "z0"), ("p90", "p90"))

CHANNELS = (
    tuple(f"a_{k}" for k in ANGLE_KEYS)
    + tuple(f"b_{k}" for k in ANGLE_KEYS)
    + ("shot_a", "shot_b")
    + tuple(joint_key(kind, ka, kb) for ka, kb in JOINT_PAIRS for kind in ("sum", "diff"))
)
_CHANNEL_ID = {name: i for i, name in enumerate(CHANNELS)}


def squeezed_cov(r: float, angle: float = 0.0) -> Cov2:
    """Squeezed vacuum whose least-noise quadrature sits at ``angle``.

    Variances ``e^(-2r)`` and ``e^(+2r)`` along the principal axes.
    """
    if r < 0:
        raise DomainError(f"squeezing parameter must be non-negative, got {r}")
    return rotate_cov(Cov2(math.exp(-2 * r), 0.0, math.exp(2 * r)), -angle)


def tmsv_cov(r: float) -> Cov4:
    if r < 0:
        raise DomainError(f"squeezing parameter must be non-negative, got {r}")
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    return Cov4(np.array([
        [c, 0, s, 0],
        [0, c, 0, -s],
        [s, 0, c, 0],
        [0, -s, 0, c],
    ]))


def beamsplit(cov_a: Cov2, cov_b: Cov2, transmission: float) -> Cov4:
    """Mix two single-mode states on a beamsplitter of intensity transmission ``t``.

    Output a is ``sqrt(t) a + sqrt(1-t) b``, output b is ``sqrt(1-t) a - sqrt(t) b``
    (the same map for X and P).
    """
    t = transmission
    if not 0 < t < 1:
        raise DomainError(f"transmission must lie in (0, 1), got {t}")
    u, v = math.sqrt(t), math.sqrt(1 - t)
    s = np.array([
        [u, 0, v, 0],
        [0, u, 0, v],
        [v, 0, -u, 0],
        [0, v, 0, -u],
    ])
    return Cov4(s @ direct_sum(cov_a, cov_b) @ s.T)


@dataclass(frozen=True)
class StateSpec:
    kind: str = "vacuum"
    r: float = 0.0
    angle: float = 0.0
    transmission: float = 0.5
    modes: int = 1
    custom_cov: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise DomainError(f"unknown state kind {self.kind!r}; expected one of {STATE_KINDS}")
        if self.kind in ("tmsv", "beamsplit_squeezed"):
            object.__setattr__(self, "modes", 2)
        if self.kind == "custom":
            if self.custom_cov is None:
                raise DomainError("custom state needs custom_cov")
            arr = np.asarray(self.custom_cov, dtype=float)
            if arr.shape not in ((2, 2), (4, 4)):
                raise DomainError(f"custom_cov must be 2x2 or 4x4, got {arr.shape}")
            object.__setattr__(self, "custom_cov", tuple(map(tuple, arr.tolist())))
            object.__setattr__(self, "modes", arr.shape[0] // 2)
        if self.modes not in (1, 2):
            raise DomainError(f"modes must be 1 or 2, got {self.modes}")

    def cov(self):
        """Exact covariance (:class:`Cov2` or :class:`Cov4`)."""
        if self.kind == "custom":
            arr = np.array(self.custom_cov)
            return Cov2.from_matrix(arr) if self.modes == 1 else Cov4(arr)
        if self.kind == "tmsv":
            return tmsv_cov(self.r)
        if self.kind == "beamsplit_squeezed":
            return beamsplit(squeezed_cov(self.r, self.angle), Cov2.identity(), self.transmission)
        single = Cov2.identity() if self.kind == "vacuum" else squeezed_cov(self.r, self.angle)
        if self.modes == 1:
            return single
        return Cov4(direct_sum(single, Cov2.identity()))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["custom_cov"] is not None:
            d["custom_cov"] = [list(row) for row in d["custom_cov"]]
        return d


@dataclass(frozen=True)
class SynthRun:
    """Acquisition settings for synthetic data.

    ``shot_level`` is the raw-unit variance of a vacuum channel (the squared
    coherent amplitude); ``attenuation`` scales the shot-noise record the way
    an inserted polariser would, and the record's ``intensity_scale`` undoes it.
    ``noise="uniform"`` is a test-only mode emitting unfiltered uniform noise.
    """

    state: StateSpec = field(default_factory=StateSpec)
    n_samples: int = 2500
    n_traces: int = 40
    dt: float = 1e-7
    band: BandSpec = field(default_factory=lambda: BandSpec(3e6, 4e5))
    seed: int = 0
    shot_level: float = 1.0
    shot_level_b: float = 1.0
    attenuation: float = 1.0
    base_theta: float = 0.0
    noise: str = "gaussian"

    def __post_init__(self):
        if self.n_samples < 2 or self.n_traces < 1:
            raise DomainError("need n_samples >= 2 and n_traces >= 1")
        if not (0 < self.attenuation <= 1):
            raise DomainError(f"attenuation must lie in (0, 1], got {self.attenuation}")
        if self.shot_level <= 0 or self.shot_level_b <= 0:
            raise DomainError("shot levels must be positive")
        if self.noise not in ("gaussian", "uniform"):
            raise DomainError(f"unknown noise mode {self.noise!r}")
        if self.seed < 0 or self.seed >= 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.band.check_nyquist(self.dt)


def _generator(seed: int, point: int, channel: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(point, _CHANNEL_ID[channel]))
    return np.random.Generator(np.random.Philox(ss))


def _cholesky(matrix: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise DomainError("covariance is not positive definite; cannot colour noise") from None


def _quadrature(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _stream(run: SynthRun, chol: np.ndarray, weights: np.ndarray, point: int, channel: str):
    """``(n_traces, n_samples)`` samples of ``weights . z`` with ``z ~ N(0, L L^T)``."""
    rng = _generator(run.seed, point, channel)
    shape = (run.n_traces, run.n_samples, chol.shape[0])
    if run.noise == "uniform":
        white = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=shape)
        return white @ (chol.T @ weights)
    white = rng.standard_normal(shape)
    y = white @ (chol.T @ weights)
    mask = band_mask(run.n_samples, run.dt, run.band)
    gain = math.sqrt(run.n_samples / np.count_nonzero(mask))
    return gain * bandpass_array(y, run.dt, run.band)


def _as_cov_matrix(cov) -> np.ndarray:
    if isinstance(cov, Cov2):
        return cov.as_array()
    if isinstance(cov, Cov4):
        return cov.as_array()
    return np.asarray(cov, dtype=float)


def sample_traces(run: SynthRun, cov=None, *, point: int = 0, detuning: float = 0.0,
                  check_physical: bool = True) -> SweepPoint:
    """Generate every trace set needed to reconstruct ``cov``.

    A single-mode covariance yields the four-angle quartet for beam a plus a
    shot-noise record; a two-mode covariance adds beam b, its shot record and
    sum/difference channels for the cross block.  ``cov`` defaults to
    ``run.state.cov()``.
    """
    cov = run.state.cov() if cov is None else cov
    sigma = _as_cov_matrix(cov)
    if sigma.shape not in ((2, 2), (4, 4)):
        raise DomainError(f"covariance must be 2x2 or 4x4, got {sigma.shape}")
    if check_physical:
        if sigma.shape == (2, 2):
            ok = Cov2.from_matrix(sigma).det >= 1 - 1e-9
        else:
            ok = consistency_check(sigma, tol=1e-9)
        if not ok:
            raise DomainError("covariance is not physical")
    chol = _cholesky(sigma)
    two = sigma.shape == (4, 4)
    dim = sigma.shape[0]
    amp_a, amp_b = math.sqrt(run.shot_level), math.sqrt(run.shot_level_b)

    def weights(mode, key):
        w = np.zeros(dim)
        theta = run.base_theta + ANGLE_OFFSETS[key]
        if mode == "a":
            w[0:2] = amp_a * _quadrature(theta)
        else:
            w[2:4] = amp_b * _quadrature(theta)
        return w

    def traceset(data, theta):
        return TraceSet.from_array(data, run.dt, theta)

    def beam(mode):
        return {
            key: traceset(_stream(run, chol, weights(mode, key), point, f"{mode}_{key}"),
                          run.base_theta + ANGLE_OFFSETS[key])
            for key in ANGLE_KEYS
        }

    def shot(channel, level):
        vac = np.ones((1, 1))
        data = _stream(run, vac, np.array([math.sqrt(level * run.attenuation)]), point, channel)
        return ShotNoiseRecord(traceset(data, 0.0).traces, 1.0 / run.attenuation)

    beam_a = beam("a")
    shot_a = shot("shot_a", run.shot_level)
    if not two:
        return SweepPoint(detuning, beam_a, shot_a)
    beam_b = beam("b")
    shot_b = shot("shot_b", run.shot_level_b)
    joint = {}
    for ka, kb in JOINT_PAIRS:
        for kind, sign in (("sum", 1.0), ("diff", -1.0)):
            name = joint_key(kind, ka, kb)
            w = weights("a", ka) + sign * weights("b", kb)
            joint[name] = traceset(_stream(run, chol, w, point, name),
                                   run.base_theta + ANGLE_OFFSETS[ka])
    return SweepPoint(detuning, beam_a, shot_a, beam_b, shot_b, joint)


def truth_record(detuning: float, state: StateSpec, cov, run: SynthRun) -> dict:
    """Ground truth for one sweep point, JSON-serialisable."""
    sigma = _as_cov_matrix(cov)
    rec = {
        "detuning_ghz": float(detuning),
        "state": state.to_dict(),
        "cov": sigma.tolist(),
        "shot_level_a": run.shot_level,
    }
    if sigma.shape == (2, 2):
        ell = noise_ellipse(Cov2.from_matrix(sigma))
        rec.update(var_min=ell.var_min, var_max=ell.var_max, theta_min_rad=ell.theta_min)
    else:
        rec["shot_level_b"] = run.shot_level_b
        rec["gamma"] = sigma[:2, 2:].tolist()
        try:
            rec["nu"] = list(symplectic_eigenvalues(sigma))
        except ArithmeticError:
            rec["nu"] = None
    return rec


def _point_files(idx: int, two: bool) -> dict:
    stem = f"p{idx:03d}"
    ref = {
        "beam_a": {k: f"{stem}/a_{k}.csv" for k in ANGLE_KEYS},
        "shot_a": {"file": f"{stem}/shot_a.csv"},
    }
    if two:
        ref["beam_b"] = {k: f"{stem}/b_{k}.csv" for k in ANGLE_KEYS}
        ref["shot_b"] = {"file": f"{stem}/shot_b.csv"}
        ref["joint"] = {
            joint_key(kind, ka, kb): f"{stem}/{joint_key(kind, ka, kb)}.csv"
            for ka, kb in JOINT_PAIRS
            for kind in ("sum", "diff")
        }
    return ref


def _write_point(root: Path, idx: int, sp: SweepPoint) -> dict:
    ref = _point_files(idx, sp.two_beam)
    ref = {"detuning_ghz": sp.detuning, **ref}
    for key in ANGLE_KEYS:
        write_trace_file(root / ref["beam_a"][key], sp.beam_a[key])
    write_trace_file(root / ref["shot_a"]["file"], np.stack([t.samples for t in sp.shot_a.traces]))
    ref["shot_a"]["intensity_scale"] = sp.shot_a.intensity_scale
    if sp.two_beam:
        for key in ANGLE_KEYS:
            write_trace_file(root / ref["beam_b"][key], sp.beam_b[key])
        write_trace_file(root / ref["shot_b"]["file"],
                         np.stack([t.samples for t in sp.shot_b.traces]))
        ref["shot_b"]["intensity_scale"] = sp.shot_b.intensity_scale
        for key, fname in ref["joint"].items():
            write_trace_file(root / fname, sp.joint[key])
    return ref


def synth_sweep(profile: Sequence, run: SynthRun, out_dir=None, *, strict: bool = True,
                jobs: int = 1, reference_line: str = "synthetic") -> SweepDataset:
    """Generate a sweep from ``[(detuning_ghz, StateSpec or covariance), ...]``.

    With ``out_dir`` the dataset is also written to disk: ``manifest.json``,
    one directory of trace CSVs per point, and ``truth.json`` holding the
    exact covariances.  ``strict=False`` lets a non-physical covariance
    through (for exercising the consistency gate downstream).
    """
    profile = list(profile)
    if not profile:
        raise DomainError("profile must contain at least one point")
    detunings = [float(d) for d, _ in profile]
    if any(b <= a for a, b in zip(detunings, detunings[1:])):
        raise DomainError("profile detunings must be strictly increasing")

    def states():
        for d, st in profile:
            if isinstance(st, StateSpec):
                yield d, st, st.cov()
            else:
                spec = StateSpec("custom", custom_cov=_as_cov_matrix(st))
                yield d, spec, spec.cov()

    items = list(states())

    def make(idx):
        d, spec, cov = items[idx]
        return sample_traces(replace(run, state=spec), cov, point=idx, detuning=d,
                             check_physical=strict)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        points = tuple(pool.map(make, range(len(items))))

    manifest = Manifest(run.base_theta, run.band.omega, run.band.delta, run.dt,
                        reference_line, ())
    dataset = SweepDataset(manifest, points)
    if out_dir is None:
        return dataset

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    refs = [_write_point(root, i, sp) for i, sp in enumerate(points)]
    manifest_path = write_manifest(
        root / "manifest.json",
        base_theta=run.base_theta,
        omega=run.band.omega,
        bandwidth=run.band.delta,
        dt=run.dt,
        points=refs,
        reference_line=reference_line,
    )
    truth = {
        "schema_version": 1,
        "prng": PRNG_NAME,
        "seed": run.seed,
        "n_samples": run.n_samples,
        "n_traces": run.n_traces,
        "dt_s": run.dt,
        "omega_hz": run.band.omega,
        "bandwidth_hz": run.band.delta,
        "base_theta_rad": run.base_theta,
        "attenuation": run.attenuation,
        "noise": run.noise,
        "points": [truth_record(d, spec, cov, run) for d, spec, cov in items],
    }
    (root / "truth.json").write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    return SweepDataset(replace(manifest, path=manifest_path), points)
