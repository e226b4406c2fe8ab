"""Acceptance battery: one test per criterion, each with its time budget.

Every test records a one-line verdict; the lines are printed together at
the end of the session (see conftest.py).
"""

import json
import time
from pathlib import Path

import numpy as np

from equidist.cli import main
from equidist.experiments import run_exceptional, run_mu, run_regularize
from equidist.fibers import SolverSettings, backward_tree, fiber
from equidist.maps import PRESETS, preset
from equidist.projective import ProjectivePoint
from equidist.rates import (
    RateExperimentConfig,
    fiber_holder_probe,
    log_prefactor_scan,
    run_exceptional_control,
    run_rate_experiment,
)

ROOT = Path(__file__).resolve().parents[1]
RESULTS = {}


class Clock:
    def __init__(self, budget):
        self.budget = budget
        self.t0 = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0

    @property
    def ok(self):
        return self.elapsed < self.budget


def record(number, name, ok, clock, detail):
    passed = bool(ok) and clock.ok
    RESULTS[number] = (
        f"criterion {number:2d} {name:<22s} {'PASS' if passed else 'FAIL'}  "
        f"{detail}; {clock.elapsed:.1f} s of {clock.budget:.0f} s"
    )
    assert ok, RESULTS[number]
    assert clock.ok, RESULTS[number]


def closed_form_e(n):
    r2 = 2.0 ** (2.0 ** (1 - n))
    return (r2 - 1) / (r2 + 1)


def test_01_mass_conservation():
    clock = Clock(60)
    s = SolverSettings()
    cases = [(name, ProjectivePoint.affine(0.3 + 0.2j), 10) for name in ("z2", "z3", "basilica", "cheb")]
    cases.append(("torus2", ProjectivePoint([0.3 + 0.2j, 0.5 - 0.1j, 1]), 5))
    bad, worst = [], 0.0
    for name, a, nmax in cases:
        f = preset(name)
        for level in backward_tree(f, a, nmax, s, levels=True)[1:]:
            worst = max(worst, level.residual)
            if level.total_multiplicity != f.topological_degree**level.n or level.residual > 1e-8:
                bad.append((name, level.n))
    record(1, "mass conservation", not bad, clock, f"failures {bad}, worst residual {worst:.2e}")


def test_02_closed_form_rate():
    clock = Clock(10)
    rep = run_rate_experiment(RateExperimentConfig(preset("z2"), ProjectivePoint.affine(2)))
    err = max(abs(rep.e_n[n] - closed_form_e(n)) for n in range(1, 11))
    ok = err <= 1e-8 and 0.48 <= rep.fitted_rate_rho <= 0.52
    record(2, "closed-form rate", ok, clock, f"max |e_n - oracle| {err:.1e}, rho {rep.fitted_rate_rho:.4f}")


def test_03_log_prefactor():
    clock = Clock(30)
    scan = log_prefactor_scan(preset("z2"), "Z", alpha=2.0)
    record(3, "log prefactor", scan.spread < 4, clock, f"ratio spread {scan.spread:.3f} (limit 4)")


def test_04_exceptional_control():
    clock = Clock(10)
    cases = [("z2", [0, 1]), ("z2", [1, 0]), ("basilica", [1, 0]), ("cheb", [1, 0])]
    verdicts, peaks = [], []
    for name, point in cases:
        rep = run_exceptional_control(RateExperimentConfig(preset(name), ProjectivePoint(point)))
        verdicts.append(rep.verdict)
        peaks.append(max(rep.e_n.values()))
    ok = all(v == "non-convergent" for v in verdicts) and min(peaks) >= 0.1
    record(4, "exceptional control", ok, clock, f"verdicts {verdicts}, min peak {min(peaks):.3f}")


def test_05_invariance():
    clock = Clock(180)
    failed = []
    for name in PRESETS:
        f = preset(name)
        res, _, _ = run_mu(f, SolverSettings(rng_seed=5), 10**5, 20, invariance=True)
        failed += [(name, label) for label, c in res["invariance"].items() if not c["ok"]]
    record(5, "invariance", not failed, clock, f"{len(PRESETS)} presets, failing pairs {failed}")


def test_06_known_moments():
    clock = Clock(120)
    res, _, _ = run_mu(preset("cheb"), SolverSettings(rng_seed=6), 10**5, 20, moments=True)
    m = res["moments"]
    x, x2 = m["x"], m["x^2"]
    cheb_ok = abs(x["value"].real if isinstance(x["value"], complex) else x["value"]) <= 3 * x["stderr"]
    x2v = float(np.real(x2["value"]))
    cheb_ok = cheb_ok and abs(x2v - 2.0) <= 3 * x2["stderr"]
    res, _, _ = run_mu(preset("z2"), SolverSettings(rng_seed=6), 10**5, 20, moments=True)
    m = res["moments"]
    annulus = float(np.real(m["annulus_0.9_1.1"]["value"]))
    zm = [abs(complex(m[f"z^{k}"]["value"])) / m[f"z^{k}"]["stderr"] for k in range(1, 5)]
    ok = cheb_ok and annulus >= 0.99 and max(zm) <= 3
    detail = (f"cheb <x^2> {x2v:.4f} +- {x2['stderr']:.1e}, z2 annulus mass {annulus:.4f}, "
              f"max |<z^m>|/stderr {max(zm):.2f}")
    record(6, "known moments", ok, clock, detail)


def test_07_lojasiewicz_exponents():
    clock = Clock(30)
    cases = [
        ("z2", [1, 1], 1.0, 0.05),
        ("z3", [1, 1], 1.0, 0.05),
        ("basilica", [0.5, 1], 1.0, 0.05),
        ("z2", [0, 1], 0.5, 0.05),
        ("z3", [0, 1], 1 / 3, 0.04),
    ]
    found, ok = [], True
    for name, base, expect, tol in cases:
        slope = fiber_holder_probe(preset(name), ProjectivePoint(base)).fitted_exponent
        found.append(round(slope, 4))
        ok = ok and abs(slope - expect) <= tol
    record(7, "Lojasiewicz exponents", ok, clock, f"exponents {found}")


def test_08_backward_contraction():
    clock = Clock(60)
    violations = {}
    for name in PRESETS:
        res, _ = run_exceptional(preset(name), SolverSettings(), "probe-contraction", n=4, pairs=100, seed=8)
        violations[name] = res["violations"]
    record(8, "backward contraction", sum(violations.values()) == 0, clock, f"violations {violations}")


def test_09_kappa_cocycle():
    clock = Clock(60)
    violations = {}
    for name in PRESETS:
        # d^(kn) bounds the local count; torus2 stays at n + m <= 3 to keep its trees small
        n = 3 if name == "torus2" else 6
        res, _ = run_exceptional(preset(name), SolverSettings(), "cocycle", n=n, count=20, seed=7)
        violations[name] = res["violations"]
    record(9, "kappa cocycle", sum(violations.values()) == 0, clock, f"violations {violations}")


def test_10_regularization():
    clock = Clock(30)
    res, _ = run_regularize("X", 1, [0.1, 0.03, 0.01], 100, 1000, 10)
    within = all(t["within_bound"] for t in res["thetas"])
    sups = ", ".join(f"{t['theta']:g}: {t['sup_diff']:.2e} <= {t['bound']:.2e}" for t in res["thetas"])
    record(10, "regularization", within and res["monotone"], clock, sups)


def test_11_torus_battery():
    clock = Clock(300)
    f = preset("torus2")
    s = SolverSettings(rng_seed=11)
    simple = fiber(f, ProjectivePoint([0.3 + 0.2j, 0.5 - 0.1j, 1]), s)
    fiber_ok = len(simple) == 4 and list(simple.multiplicities) == [1, 1, 1, 1]
    levels = backward_tree(f, ProjectivePoint([0.3 + 0.2j, 0.5 - 0.1j, 1]), 5, s, levels=True)
    mass_ok = all(lv.total_multiplicity == 4**lv.n for lv in levels)
    rep = run_rate_experiment(RateExperimentConfig(f, ProjectivePoint([2, 3, 1]), ("rad_zt",), lambda_target=1.7,
                                                   solver=s))
    rho = rep.fitted_rate_rho
    res, _, _ = run_mu(f, s, 10**5, 20, tube=(0.05, 0.1, 0.2, 0.3, 0.4))
    tube = res["tube"]
    beta = tube["beta_hat"]
    beta_ok = beta is not None and 0.5 < beta < 4
    ok = fiber_ok and mass_ok and rho <= 0.6 and beta_ok
    detail = (f"simple fiber {fiber_ok}, mass {mass_ok}, rho {rho:.3f}, beta_hat {beta} "
              f"({tube['status']}, masses {tube['masses']})")
    record(11, "k=2 battery", ok, clock, detail)


def test_12_determinism(tmp_path):
    clock = Clock(600)
    config = ROOT / "configs" / "acceptance_battery.json"
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        code = main(["suite", str(config), "--output-dir", str(out)])
        runs.append((code, out))
    names = sorted(p.name for p in runs[0][1].iterdir() if p.name != "timings.json")
    reports = [n for n in names if n.endswith(".json") and n != "summary.json"]
    same = all((runs[0][1] / n).read_bytes() == (runs[1][1] / n).read_bytes() for n in names)
    summary = json.loads((runs[0][1] / "summary.json").read_text())
    errored = [r["id"] for r in summary["experiments"] if r["status"] != "ok"]
    ok = same and runs[0][0] == runs[1][0] == 0 and len(reports) == 12 and not errored
    record(12, "determinism", ok, clock, f"{len(reports)} reports, identical {same}, errored {errored}")
