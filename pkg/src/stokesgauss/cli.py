"""Command-line entry point: ``stokesgauss <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze_sweep
from .errors import DomainError, ValidationError
from .gaussianity import (
    DEFAULT_EVEN_TOL,
    DEFAULT_ODD_SIGMA,
    DEFAULT_P_MAX,
    gaussian_reference,
    gaussianity_verdict,
    histogram,
    normalized_moments,
)
from .signal_filter import BandSpec, bandpass_array, filtered_variance
from .synth import StateSpec, SynthRun, synth_sweep
from .trace_io import load_manifest, load_trace_file

log = logging.getLogger("stokesgauss")

SCHEMA_VERSION = 1
SINGLE_COLUMNS = ("detuning_ghz", "var_min", "var_max", "theta_min_rad")
PAIR_COLUMNS = ("detuning_ghz", "mpte", "log_negativity", "discord_b", "consistent")
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _num(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_num(v) for v in row])


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _band(args, manifest=None) -> BandSpec:
    omega = args.omega_hz if args.omega_hz is not None else getattr(manifest, "omega", None)
    width = args.bandwidth_hz if args.bandwidth_hz is not None else getattr(manifest, "bandwidth", None)
    if omega is None or width is None:
        raise UsageError("--omega-hz and --bandwidth-hz are required")
    try:
        return BandSpec(omega, width)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _load_dataset(args):
    dataset = load_manifest(args.manifest)
    if not dataset.points:
        raise UsageError(f"manifest {args.manifest} contains no sweep points")
    band = _band(args, dataset.manifest)
    try:
        band.check_nyquist(dataset.manifest.dt)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    dark = None
    if args.dark:
        dark_ts = load_trace_file(args.dark, dataset.manifest.dt)
        dark = filtered_variance(dark_ts, band)
    return dataset, band, dark


def _header(args, band, dataset, mode) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": mode,
        "manifest": str(args.manifest),
        "omega_hz": band.omega,
        "bandwidth_hz": band.delta,
        "base_theta_rad": dataset.manifest.base_theta,
        "dark_subtracted": bool(args.dark),
        "log_base": 2,
    }


def cmd_analyze_single(args) -> int:
    dataset, band, dark = _load_dataset(args)
    results = analyze_sweep(dataset, "single", band, jobs=args.jobs, dark=dark)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in results:
        e = r.ellipse or {}
        theta = e.get("theta_min_rad") if e.get("theta_defined") else None
        rows.append((r.detuning, e.get("var_min"), e.get("var_max"), theta))
    _write_csv(out / "single.csv", SINGLE_COLUMNS, rows)
    doc = _header(args, band, dataset, "single")
    doc["n_points"] = len(results)
    doc["n_failed"] = sum(r.discarded for r in results)
    doc["points"] = [r.to_dict() for r in results]
    _write_json(out / "single.json", doc)
    for r in results:
        if r.discarded:
            log.warning("point %.6g GHz failed: %s", r.detuning, r.reason)
    print(f"analyzed {len(results)} points, {doc['n_failed']} failed -> {out}")
    return EXIT_OK


def cmd_analyze_pair(args) -> int:
    dataset, band, dark = _load_dataset(args)
    results = analyze_sweep(
        dataset, "pair", band, jobs=args.jobs, dark=dark,
        tol=args.tol, n_sigma=args.consistency_sigma, seed=args.seed,
        discord=not args.no_discord,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in results:
        s = r.symplectic or {}
        if r.discarded:
            rows.append((r.detuning, None, None, None, False))
        else:
            rows.append((r.detuning, s["nu_tilde_minus"], s["log_negativity"],
                         s["discord_b"], True))
    _write_csv(out / "pair.csv", PAIR_COLUMNS, rows)
    n_discarded = sum(r.discarded for r in results)
    doc = _header(args, band, dataset, "pair")
    doc.update(
        n_points=len(results),
        n_discarded=n_discarded,
        consistency_tol=args.tol,
        consistency_sigma=args.consistency_sigma,
        discord_seed=args.seed,
        points=[r.to_dict() for r in results],
    )
    _write_json(out / "pair.json", doc)
    print(f"analyzed {len(results)} points, {n_discarded} discarded -> {out}")
    return EXIT_OK


def cmd_gaussianity(args) -> int:
    if args.bins < 1:
        raise UsageError("--bins must be at least 1")
    if args.pmax < 2:
        raise UsageError("--pmax must be at least 2")
    ts = load_trace_file(args.trace, args.dt)
    data = ts.as_array()
    if not args.no_filter:
        band = _band(args)
        try:
            band.check_nyquist(args.dt)
        except DomainError as exc:
            raise UsageError(str(exc)) from None
        data = bandpass_array(data, args.dt, band)
    hist = histogram(data, args.bins)
    var = float(np.mean((data - data.mean()) ** 2))
    ref = gaussian_reference(var, float(data.mean()), hist.bin_centers) if var > 0 else np.zeros(args.bins)
    report = normalized_moments(data, args.pmax)
    verdict = gaussianity_verdict(report, args.even_tol, args.odd_sigma)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "histogram.csv", ("bin_center", "density", "gauss_ref"),
               zip(hist.bin_centers, hist.density, ref))
    _write_csv(out / "moments.csv", ("order", "value", "stderr"),
               zip(report.orders, report.normalized, report.stderr))
    _write_json(out / "verdict.json", {
        "schema_version": SCHEMA_VERSION,
        "trace": str(args.trace),
        "filtered": not args.no_filter,
        "passed": verdict.passed,
        "failed_orders": list(verdict.failed_orders),
        "even_tol": args.even_tol,
        "odd_sigma": args.odd_sigma,
        "degenerate_histogram": hist.degenerate,
    })
    if verdict.passed:
        print("gaussianity: PASS")
    else:
        print("gaussianity: FAIL orders=" + ",".join(str(p) for p in verdict.failed_orders))
    return EXIT_OK


_STATE_ALIASES = {"beamsplit": "beamsplit_squeezed"}


def _state_from(d: dict) -> StateSpec:
    d = dict(d)
    d.pop("detuning_ghz", None)
    kind = _STATE_ALIASES.get(d.get("kind", "vacuum"), d.get("kind", "vacuum"))
    d["kind"] = kind
    return StateSpec(**d)


def cmd_synth(args) -> int:
    try:
        band = _band(args)
        if args.profile:
            entries = json.loads(Path(args.profile).read_text(encoding="utf-8"))
            profile = [(float(e["detuning_ghz"]), _state_from(e)) for e in entries]
        else:
            state = _state_from({
                "kind": args.state, "r": args.r, "angle": args.angle,
                "transmission": args.t, "modes": args.modes,
            })
            profile = [(0.0, state)]
        for _, state in profile:
            state.cov()
        run = SynthRun(
            n_samples=args.n_samples, n_traces=args.n_traces, dt=args.dt, band=band,
            seed=args.seed, shot_level=args.shot_level, shot_level_b=args.shot_level,
            attenuation=args.attenuation, base_theta=args.base_theta, noise=args.noise,
        )
    except (DomainError, TypeError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    synth_sweep(profile, run, args.out, strict=not args.allow_unphysical, jobs=args.jobs)
    print(f"wrote {len(profile)} point(s) to {args.out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser, manifest=True):
    if manifest:
        p.add_argument("--manifest", required=True, help="sweep manifest (JSON)")
    p.add_argument("--omega-hz", type=float, help="band centre frequency")
    p.add_argument("--bandwidth-hz", type=float, help="band full width")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel workers (results are order-independent)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stokesgauss",
        description="Gaussian-state reconstruction from Stokes-operator time traces.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-single", help="single-beam covariance and noise ellipse")
    _common(p)
    p.add_argument("--dark", help="dark (electronic noise) trace CSV to subtract")
    p.set_defaults(func=cmd_analyze_single)

    p = sub.add_parser("analyze-pair", help="two-beam covariance, entanglement and discord")
    _common(p)
    p.add_argument("--dark", help="dark (electronic noise) trace CSV to subtract")
    p.add_argument("--seed", type=int, default=0, help="grid seed of the discord search")
    p.add_argument("--tol", type=float, default=1e-6, help="numerical consistency tolerance")
    p.add_argument("--consistency-sigma", type=float, default=3.0,
                   help="standard errors of nu_minus allowed below 1")
    p.add_argument("--no-discord", action="store_true")
    p.set_defaults(func=cmd_analyze_pair)

    p = sub.add_parser("gaussianity", help="histogram and normalised moments of one trace file")
    _common(p, manifest=False)
    p.add_argument("--trace", required=True, help="trace CSV")
    p.add_argument("--dt", type=float, required=True, help="sample interval in seconds")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--pmax", type=int, default=DEFAULT_P_MAX)
    p.add_argument("--even-tol", type=float, default=DEFAULT_EVEN_TOL)
    p.add_argument("--odd-sigma", type=float, default=DEFAULT_ODD_SIGMA)
    p.add_argument("--no-filter", action="store_true", help="analyse the raw samples")
    p.set_defaults(func=cmd_gaussianity)

    p = sub.add_parser("synth", help="write a synthetic dataset with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--state", default="vacuum",
                   choices=["vacuum", "squeezed", "tmsv", "beamsplit", "beamsplit_squeezed"])
    p.add_argument("--r", type=float, default=0.0, help="squeezing parameter")
    p.add_argument("--angle", type=float, default=0.0, help="least-noise quadrature angle (rad)")
    p.add_argument("--t", type=float, default=0.5, help="beamsplitter transmission")
    p.add_argument("--modes", type=int, default=1, choices=[1, 2])
    p.add_argument("--profile", help="JSON list of {detuning_ghz, kind, r, angle, ...}")
    p.add_argument("--n-samples", type=int, default=2500)
    p.add_argument("--n-traces", type=int, default=40)
    p.add_argument("--dt", type=float, default=1e-7)
    p.add_argument("--omega-hz", type=float, default=3e6)
    p.add_argument("--bandwidth-hz", type=float, default=4e5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shot-level", type=float, default=1.0)
    p.add_argument("--attenuation", type=float, default=1.0)
    p.add_argument("--base-theta", type=float, default=0.0)
    p.add_argument("--noise", choices=["gaussian", "uniform"], default="gaussian",
                   help="'uniform' is a test-only non-Gaussian mode")
    p.add_argument("--allow-unphysical", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) is not None and args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValidationError, DomainError, ArithmeticError, ValueError) as exc:
        print(f"stokesgauss: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
