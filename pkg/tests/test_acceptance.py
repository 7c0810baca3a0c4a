"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary lines are
printed even without ``-s``).  Every stochastic check uses seed 0, fixed
before the first run.
"""

import json
import math
import time

import numpy as np
import pytest

from _states import eig_route, random_physical_cov4
from stokesgauss.analysis import analyze_pair_point, analyze_single_point
from stokesgauss.cli import main
from stokesgauss.covariance import Cov2, noise_ellipse, quadrature_variance, rotate_cov, sum_rule_residual
from stokesgauss.gaussianity import gaussianity_verdict, normalized_moments
from stokesgauss.signal_filter import BandSpec, bandpass_array
from stokesgauss.symplectic import (
    consistency_check,
    gaussian_discord,
    invariants,
    ppt_eigenvalues,
    symplectic_eigenvalues,
    symplectic_eigenvalues_closed,
    symplectic_report,
)
from stokesgauss.synth import StateSpec, SynthRun, beamsplit, sample_traces, squeezed_cov, tmsv_cov

SEED = 0
BAND = BandSpec(3e6, 4e5)
DT = 1e-7


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
        assert ok, detail

    return emit


def test_01_symplectic_oracle(report):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        m, _ = random_physical_cov4(rng)
        closed = np.array(symplectic_eigenvalues_closed(m))
        oracle = np.array(eig_route(m))
        worst = max(worst, float(np.max(np.abs(closed - oracle) / oracle)))
    elapsed = time.perf_counter() - t0
    report(1, "symplectic oracle equivalence", worst <= 1e-9 and elapsed < 10,
           f"max rel diff {worst:.2e} (tol 1e-9), {elapsed:.2f} s (limit 10 s)")


def test_02_beamsplit_benchmark(report):
    t0 = time.perf_counter()
    # s = exp(-2r) = 0.25, i.e. 6 dB of input squeezing
    cov = beamsplit(squeezed_cov(math.log(2)), Cov2.identity(), 0.5)
    inv = invariants(cov)
    nu = symplectic_eigenvalues(cov)
    nt = ppt_eigenvalues(cov)
    rep = symplectic_report(cov, discord=False)
    exact = [
        abs(inv.A - 1.5625), abs(inv.B - 1.5625), abs(inv.C + 0.5625), abs(inv.D - 1.0),
        abs(nu[0] - 1), abs(nu[1] - 1), abs(nt[0] - 0.5), abs(rep.log_negativity - 1.0),
    ]
    run = SynthRun(StateSpec("beamsplit_squeezed", r=math.log(2)), n_samples=25000, n_traces=40, seed=SEED)
    res = analyze_pair_point(sample_traces(run), BAND, discord=False)
    s = res.symplectic
    elapsed = time.perf_counter() - t0
    ok = (max(exact) <= 1e-12 and not res.discarded
          and abs(s["nu_tilde_minus"] - 0.5) <= 0.05 and abs(s["log_negativity"] - 1.0) <= 0.1
          and elapsed < 60)
    report(2, "beamsplit benchmark", ok,
           f"closed-form max err {max(exact):.1e}; pipeline MPTE {s.get('nu_tilde_minus', float('nan')):.4f}, "
           f"LN {s.get('log_negativity', float('nan')):.4f}; {elapsed:.1f} s")


def test_03_squeezing_closure(report):
    r = 0.5 * math.log(10 ** 0.16)  # -1.6 dB
    angle = 0.3
    run = SynthRun(StateSpec("squeezed", r=r, angle=angle), n_samples=2500, n_traces=40,
                   dt=DT, band=BAND, seed=SEED)
    e = analyze_single_point(sample_traces(run), BAND, gaussianity=False).ellipse
    d = (e["theta_min_rad"] - angle) % math.pi
    dtheta = math.degrees(min(d, math.pi - d))
    ok = abs(e["var_min"] - 0.692) <= 0.02 and dtheta <= 2.0
    report(3, "squeezing closure at -1.6 dB", ok,
           f"var_min {e['var_min']:.4f} (0.692 +- 0.02), angle error {dtheta:.2f} deg (limit 2)")


def test_04_gaussianity_suite(report):
    run = SynthRun(StateSpec("vacuum"), n_samples=2500, n_traces=40, seed=SEED)
    data = bandpass_array(sample_traces(run).beam_a["z0"].as_array(), DT, BAND)
    rep = normalized_moments(data, 6)
    even = {p: v for p, v in zip(rep.orders, rep.normalized) if p % 2 == 0}
    odd = {p: (v, e) for p, v, e in zip(rep.orders, rep.normalized, rep.stderr) if p % 2}
    gauss_ok = all(abs(v) < 0.08 for v in even.values()) and gaussianity_verdict(rep).passed

    urun = SynthRun(StateSpec("vacuum"), n_samples=2500, n_traces=40, seed=SEED, noise="uniform")
    urep = normalized_moments(sample_traces(urun).beam_a["z0"].as_array(), 6)
    uverdict = gaussianity_verdict(urep)
    uniform_ok = 4 in uverdict.failed_orders and abs(urep.normalized[3] + 0.4) < 0.02
    report(4, "gaussianity suite", gauss_ok and uniform_ok,
           "even " + ", ".join(f"p{p}={v:+.4f}" for p, v in even.items())
           + "; odd |z| max " + f"{max(abs(v) / e if e else 0 for v, e in odd.values()):.2f}"
           + f"; uniform p4={urep.normalized[3]:+.4f} failed={list(uverdict.failed_orders)}")


def test_05_tmsv_law(report):
    errs, discords = [], []
    for r in (0.25, 0.5, 1.0):
        rep = symplectic_report(tmsv_cov(r), discord_method="closed")
        errs.append(abs(rep.nu_tilde_minus - math.exp(-2 * r)))
        errs.append(abs(rep.log_negativity - 2 * r / math.log(2)))
        discords.append(rep.discord_b)
    ok = max(errs) <= 1e-9 and discords[0] < discords[1] < discords[2]
    report(5, "TMSV law", ok, f"max err {max(errs):.1e}; discord {', '.join(f'{d:.5f}' for d in discords)}")


def test_06_discord_oracle(report):
    rng = np.random.default_rng(SEED)
    worst_closed = worst_seed = 0.0
    for _ in range(100):
        m, _ = random_physical_cov4(rng)
        assert consistency_check(m)
        search = gaussian_discord(m, seed=0)
        worst_closed = max(worst_closed, abs(gaussian_discord(m, method="closed") - search))
        worst_seed = max(worst_seed, abs(gaussian_discord(m, seed=12345) - search))
    ok = worst_closed <= 1e-4 and worst_seed <= 1e-4
    report(6, "discord oracle agreement", ok,
           f"closed vs search {worst_closed:.1e}, seed 0 vs 12345 {worst_seed:.1e} (tol 1e-4)")


def test_07_rotation_ellipse(report):
    rng = np.random.default_rng(SEED)
    worst_tr = worst_det = worst_eq = worst_sum = 0.0
    for _ in range(1000):
        a = rng.normal(size=(2, 2))
        cov = Cov2.from_matrix(a @ a.T + 0.05 * np.eye(2))
        phi = rng.uniform(-math.pi, math.pi)
        rot = rotate_cov(cov, phi)
        worst_tr = max(worst_tr, abs(rot.trace - cov.trace) / cov.trace)
        worst_det = max(worst_det, abs(rot.det - cov.det) / cov.det)
        e0, e1 = noise_ellipse(cov), noise_ellipse(rot)
        d = (e1.theta_min - (e0.theta_min - phi)) % math.pi
        worst_eq = max(worst_eq, min(d, math.pi - d))
        base = rng.uniform(-math.pi, math.pi)
        q = [float(quadrature_variance(cov, base + o)) for o in (-math.pi / 4, 0, math.pi / 4, math.pi / 2)]
        worst_sum = max(worst_sum, abs(sum_rule_residual(q)) / max(q))
    ok = worst_tr <= 1e-12 and worst_det <= 1e-12 and worst_eq <= 1e-9 and worst_sum <= 1e-12
    report(7, "rotation and ellipse properties", ok,
           f"trace {worst_tr:.1e}, det {worst_det:.1e}, angle {worst_eq:.1e}, sum rule {worst_sum:.1e}")


def test_08_consistency_gate(report, tmp_path):
    half = not consistency_check(0.5 * np.eye(4))
    unit = consistency_check(np.eye(4))
    prof = tmp_path / "profile.json"
    prof.write_text(json.dumps([
        {"detuning_ghz": -1.0, "kind": "beamsplit", "r": math.log(2)},
        {"detuning_ghz": 0.0, "kind": "custom", "custom_cov": (0.5 * np.eye(4)).tolist()},
        {"detuning_ghz": 1.0, "kind": "tmsv", "r": 0.3},
    ]))
    code_s = main(["synth", "--profile", str(prof), "--out", str(tmp_path / "d"), "--allow-unphysical",
                   "--seed", str(SEED)])
    code_a = main(["analyze-pair", "--manifest", str(tmp_path / "d" / "manifest.json"),
                   "--out", str(tmp_path / "o"), "--no-discord"])
    doc = json.loads((tmp_path / "o" / "pair.json").read_text())
    flags = [p["discarded"] for p in doc["points"]]
    ok = half and unit and code_s == 0 and code_a == 0 and doc["n_discarded"] == 1 and flags == [False, True, False]
    report(8, "consistency gate", ok,
           f"0.5*I rejected={half}, I accepted={unit}, discarded={doc['n_discarded']} flags={flags}")


def test_09_filter_contract(report):
    t = np.arange(2500) * DT
    pas = np.sin(2 * math.pi * 3e6 * t + 0.4)
    stop = np.sin(2 * math.pi * 4e6 * t + 0.4)
    err_pass = float(np.max(np.abs(bandpass_array(pas, DT, BAND) - pas)))
    err_stop = float(np.max(np.abs(bandpass_array(stop, DT, BAND))))
    ratios = []
    for k in range(100):
        x = np.random.default_rng([SEED, k]).normal(size=2500)
        ratios.append(np.var(bandpass_array(x, DT, BAND)))
    reduction = float(np.mean(ratios))
    target = BAND.delta / (0.5 / DT)
    rng = np.random.default_rng(SEED)
    x, y = rng.normal(size=(2, 2500))
    fx, fy = bandpass_array(x, DT, BAND), bandpass_array(y, DT, BAND)
    scale = float(np.max(np.abs(fx)))
    idem = float(np.max(np.abs(bandpass_array(fx, DT, BAND) - fx))) / scale
    lin = float(np.max(np.abs(bandpass_array(2.5 * x - 0.7 * y, DT, BAND) - (2.5 * fx - 0.7 * fy)))) / scale
    ok = err_pass <= 1e-9 and err_stop <= 1e-9 and abs(reduction / target - 1) <= 0.05 and idem <= 1e-12 and lin <= 1e-12
    report(9, "filter contract", ok,
           f"pass {err_pass:.1e}, stop {err_stop:.1e}, noise ratio {reduction:.4f} vs {target:.4f}, "
           f"idempotence {idem:.1e}, linearity {lin:.1e}")


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_10_determinism(report, tmp_path):
    prof = tmp_path / "profile.json"
    prof.write_text(json.dumps([
        {"detuning_ghz": 0.0, "kind": "tmsv", "r": 0.4},
        {"detuning_ghz": 0.5, "kind": "beamsplit", "r": 0.5, "transmission": 0.4},
        {"detuning_ghz": 1.0, "kind": "squeezed", "r": 0.3, "angle": 0.2, "modes": 2},
    ]))
    common = ["synth", "--profile", str(prof), "--seed", str(SEED), "--n-samples", "1000", "--n-traces", "10"]
    assert main(common + ["--out", str(tmp_path / "s1")]) == 0
    assert main(common + ["--out", str(tmp_path / "s2"), "--jobs", "3"]) == 0
    synth_same = _tree(tmp_path / "s1") == _tree(tmp_path / "s2")
    outs = {}
    for cmd in ("analyze-single", "analyze-pair"):
        for tag, jobs in (("a", 1), ("b", 1), ("c", 3)):
            out = tmp_path / f"{cmd}-{tag}"
            assert main([cmd, "--manifest", str(tmp_path / "s1" / "manifest.json"), "--out", str(out),
                         "--jobs", str(jobs)]) == 0
            outs[(cmd, tag)] = _tree(out)
    analysis_same = all(outs[(c, "a")] == outs[(c, "b")] == outs[(c, "c")]
                        for c in ("analyze-single", "analyze-pair"))
    report(10, "determinism", synth_same and analysis_same,
           f"synth byte-identical={synth_same}, analysis byte-identical across runs and --jobs={analysis_same}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
