"""Measurement datasets: traces, shot-noise records and sweep manifests.

A trace file is a CSV with a header row (``trace_1,trace_2,...``) and one
time sample per subsequent row, one column per replicate record.  A sweep is
described by a JSON manifest that points at trace files relative to its own
directory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, TraceFormatError, ValidationError

__all__ = [
    "ANGLE_KEYS",
    "ANGLE_OFFSETS",
    "Trace",
    "TraceSet",
    "ShotNoiseRecord",
    "SweepPoint",
    "Manifest",
    "SweepDataset",
    "load_trace_file",
    "write_trace_file",
    "load_manifest",
    "write_manifest",
    "waveplate_angle",
    "joint_key",
    "parse_joint_key",
]

# Quartet keys in measurement order; offsets are relative to the base angle.
ANGLE_KEYS = ("m45", "z0", "p45", "p90")
ANGLE_OFFSETS = {
    "m45": -math.pi / 4,
    "z0": 0.0,
    "p45": math.pi / 4,
    "p90": math.pi / 2,
}

TWO_PI = 2.0 * math.pi


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trace:
    """One uniformly sampled record of a balanced-detector output."""

    samples: np.ndarray
    dt: float
    label: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValidationError("trace samples must be one-dimensional")
        if samples.size < 2:
            raise ValidationError(f"trace needs at least 2 samples, got {samples.size}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive and finite, got {self.dt!r}")
        if not np.all(np.isfinite(samples)):
            raise ValidationError(f"trace {self.label!r} contains non-finite samples")
        object.__setattr__(self, "samples", _frozen(samples))

    def __len__(self):
        return self.samples.size

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.label == other.label
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


@dataclass(frozen=True)
class TraceSet:
    """Replicate traces recorded at one quadrature angle ``theta``."""

    theta: float
    traces: tuple

    def __post_init__(self):
        traces = tuple(self.traces)
        if not traces:
            raise ValidationError("a TraceSet needs at least one trace")
        n, dt = len(traces[0]), traces[0].dt
        for tr in traces[1:]:
            if len(tr) != n:
                raise ValidationError("all traces in a TraceSet must share their length")
            if tr.dt != dt:
                raise ValidationError("all traces in a TraceSet must share dt")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @classmethod
    def from_array(cls, data, dt: float, theta: float = 0.0, prefix: str = "trace"):
        """Build from a ``(n_traces, n_samples)`` array."""
        data = np.atleast_2d(np.asarray(data, dtype=float))
        traces = [Trace(row, dt, f"{prefix}_{i + 1}") for i, row in enumerate(data)]
        return cls(theta, tuple(traces))

    @property
    def dt(self) -> float:
        return self.traces[0].dt

    @property
    def n_samples(self) -> int:
        return len(self.traces[0])

    def __len__(self):
        return len(self.traces)

    def as_array(self) -> np.ndarray:
        return np.stack([tr.samples for tr in self.traces])


@dataclass(frozen=True)
class ShotNoiseRecord:
    """Traces taken with the polarizer inserted.

    ``intensity_scale`` multiplies the measured variance to undo the
    polariser's attenuation.
    """

    traces: tuple
    intensity_scale: float = 1.0

    def __post_init__(self):
        traces = tuple(self.traces)
        if not traces:
            raise ValidationError("a ShotNoiseRecord needs at least one trace")
        if not (self.intensity_scale > 0 and math.isfinite(self.intensity_scale)):
            raise ValidationError(
                f"intensity_scale must be positive, got {self.intensity_scale!r}"
            )
        object.__setattr__(self, "traces", traces)


@dataclass(frozen=True)
class SweepPoint:
    detuning: float
    beam_a: Mapping[str, TraceSet]
    shot_a: ShotNoiseRecord
    beam_b: Optional[Mapping[str, TraceSet]] = None
    shot_b: Optional[ShotNoiseRecord] = None
    joint: Optional[Mapping[str, TraceSet]] = None

    def __post_init__(self):
        for name in ("beam_a", "beam_b"):
            beam = getattr(self, name)
            if beam is None:
                continue
            missing = set(ANGLE_KEYS) - set(beam)
            extra = set(beam) - set(ANGLE_KEYS)
            if missing or extra:
                raise ValidationError(
                    f"{name} must have exactly the keys {ANGLE_KEYS}; "
                    f"missing={sorted(missing)} extra={sorted(extra)}"
                )
        if (self.beam_b is None) != (self.shot_b is None):
            raise ValidationError("beam_b must be given together with shot_b")
        if self.joint is not None:
            for key in self.joint:
                parse_joint_key(key)

    @property
    def two_beam(self) -> bool:
        return self.beam_b is not None


@dataclass(frozen=True)
class Manifest:
    base_theta: float
    omega: float
    bandwidth: float
    dt: float
    reference_line: str = ""
    points: tuple = ()
    path: Optional[Path] = None

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValidationError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.omega > 0:
            raise ValidationError(f"omega must be positive, got {self.omega}")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not self.omega + self.bandwidth / 2 < 0.5 / self.dt:
            raise ValidationError(
                f"band edge {self.omega + self.bandwidth / 2} Hz is not below the "
                f"Nyquist frequency {0.5 / self.dt} Hz"
            )


@dataclass(frozen=True)
class SweepDataset:
    manifest: Manifest
    points: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.points)


def joint_key(kind: str, key_a: str, key_b: str) -> str:
    """Name of a joint channel, e.g. ``joint_key("sum", "z0", "p90") == "sum_z0_p90"``."""
    return f"{kind}_{key_a}_{key_b}"


def parse_joint_key(key: str):
    parts = key.split("_")
    if len(parts) != 3 or parts[0] not in ("sum", "diff") or not set(parts[1:]) <= set(ANGLE_KEYS):
        raise ValidationError(f"malformed joint channel key {key!r}")
    return parts[0], parts[1], parts[2]


def _parse_csv_strict(path: Path):
    """Slow path used only to locate the offending line of a bad file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("file is empty", path) from None
        width = len(header)
        if width == 0 or any(not h.strip() for h in header):
            raise TraceFormatError("header has empty column names (trailing comma?)", path, 1)
        for row in reader:
            line = reader.line_num
            if len(row) != width:
                raise TraceFormatError(
                    f"expected {width} columns, found {len(row)}", path, line
                )
            for cell in row:
                try:
                    value = float(cell)
                except ValueError:
                    raise TraceFormatError(f"cannot parse {cell!r} as a number", path, line) from None
                if not math.isfinite(value):
                    raise ValidationError(f"{path}:{line}: non-finite value {cell!r}")
    raise TraceFormatError("unparseable content", path)


def load_trace_file(path, dt: float, theta: float = 0.0) -> TraceSet:
    """Read a trace CSV into a :class:`TraceSet` (one trace per column).

    Raises :class:`TraceFormatError` with the line number on malformed
    content, :class:`ValidationError` on non-finite values or too few rows.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trace file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    columns = header.split(",")
    if not header or any(not c.strip() for c in columns):
        raise TraceFormatError("missing or malformed header", path, 1)
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float, encoding="utf-8")
    except ValueError:
        _parse_csv_strict(path)
        raise
    if data.shape[0] == 0:
        raise ValidationError(f"{path}: no samples after the header")
    if data.shape[1] != len(columns):
        _parse_csv_strict(path)
        raise TraceFormatError(
            f"header names {len(columns)} columns, data has {data.shape[1]}", path
        )
    if not np.all(np.isfinite(data)):
        row = int(np.argwhere(~np.isfinite(data))[0, 0])
        raise ValidationError(f"{path}:{row + 2}: non-finite value")
    traces = tuple(
        Trace(data[:, j], dt, columns[j].strip()) for j in range(data.shape[1])
    )
    return TraceSet(theta, traces)


def write_trace_file(path, traces) -> Path:
    """Write a :class:`TraceSet` or ``(n_traces, n_samples)`` array as CSV.

    Values are written with 17 significant digits so that reloading gives
    bit-identical samples.
    """
    path = Path(path)
    data = traces.as_array() if isinstance(traces, TraceSet) else np.atleast_2d(traces)
    header = ",".join(f"trace_{i + 1}" for i in range(data.shape[0]))
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data.T, fmt="%.17g", delimiter=",", header=header, comments="",
               encoding="utf-8")
    return path


def _resolve(root: Path, ref) -> Path:
    if not isinstance(ref, str):
        raise ValidationError(f"expected a file reference, got {ref!r}")
    p = Path(ref)
    p = p if p.is_absolute() else root / p
    if not p.is_file():
        raise FileNotFoundError(f"referenced file not found: {p}")
    return p


def _load_beam(root, refs, dt, base_theta, name):
    if not isinstance(refs, Mapping):
        raise ValidationError(f"{name} must map angle keys to files")
    unknown = set(refs) - set(ANGLE_KEYS)
    if unknown:
        raise ValidationError(f"{name} has unknown angle keys {sorted(unknown)}")
    return {
        key: load_trace_file(_resolve(root, refs[key]), dt, base_theta + ANGLE_OFFSETS[key])
        for key in ANGLE_KEYS
        if key in refs
    }


def _load_shot(root, spec, dt, name):
    if not isinstance(spec, Mapping) or "file" not in spec:
        raise ValidationError(f"{name} needs a 'file' entry")
    ts = load_trace_file(_resolve(root, spec["file"]), dt)
    return ShotNoiseRecord(ts.traces, float(spec.get("intensity_scale", 1.0)))


def load_manifest(path) -> SweepDataset:
    """Load a sweep manifest and every trace file it references."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid manifest: {exc}") from None
    try:
        manifest = Manifest(
            base_theta=float(raw["base_theta_rad"]),
            omega=float(raw["omega_hz"]),
            bandwidth=float(raw["bandwidth_hz"]),
            dt=float(raw["dt_s"]),
            reference_line=str(raw.get("reference_line", "")),
            points=tuple(raw.get("points", ())),
            path=path,
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: manifest is missing key {exc}") from None

    root = path.parent
    points = []
    last = -math.inf
    for i, ref in enumerate(manifest.points):
        where = f"points[{i}]"
        try:
            detuning = float(ref["detuning_ghz"])
        except (KeyError, TypeError, ValueError):
            raise ValidationError(f"{where}: missing or invalid detuning_ghz") from None
        if detuning == last:
            raise ValidationError(f"{where}: duplicate detuning {detuning} GHz")
        if detuning < last:
            raise ValidationError(f"{where}: detunings must be strictly increasing")
        last = detuning
        if "beam_a" not in ref or "shot_a" not in ref:
            raise ValidationError(f"{where}: beam_a and shot_a are required")
        if ("beam_b" in ref) != ("shot_b" in ref):
            raise ValidationError(f"{where}: beam_b must be given together with shot_b")
        dt, base = manifest.dt, manifest.base_theta
        beam_a = _load_beam(root, ref["beam_a"], dt, base, f"{where}.beam_a")
        shot_a = _load_shot(root, ref["shot_a"], dt, f"{where}.shot_a")
        beam_b = shot_b = joint = None
        if "beam_b" in ref:
            beam_b = _load_beam(root, ref["beam_b"], dt, base, f"{where}.beam_b")
            shot_b = _load_shot(root, ref["shot_b"], dt, f"{where}.shot_b")
        if "joint" in ref:
            joint = {}
            for key, fref in ref["joint"].items():
                _, ka, kb = parse_joint_key(key)
                joint[key] = load_trace_file(_resolve(root, fref), dt, base + ANGLE_OFFSETS[ka])
        points.append(SweepPoint(detuning, beam_a, shot_a, beam_b, shot_b, joint))
    return SweepDataset(manifest, tuple(points))


def write_manifest(path, *, base_theta, omega, bandwidth, dt, points: Sequence[dict],
                   reference_line="") -> Path:
    """Serialise a manifest whose ``points`` already hold relative file references."""
    path = Path(path)
    doc = {
        "schema_version": 1,
        "base_theta_rad": float(base_theta),
        "omega_hz": float(omega),
        "bandwidth_hz": float(bandwidth),
        "dt_s": float(dt),
        "reference_line": reference_line,
        "points": list(points),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def waveplate_angle(theta: float) -> float:
    """Half-wave-plate fast-axis angle (from x) that selects the Stokes angle ``theta``.

    Assumes the fixed quarter-wave plate sits at pi/4.  Result in ``[0, pi)``.
    """
    if not math.isfinite(theta):
        raise DomainError("theta must be finite")
    angle = math.fmod(math.pi / 8 + theta / 4, math.pi)
    if angle < 0:
        angle += math.pi
    return angle
