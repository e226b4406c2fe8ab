"""Runners shared by the CLI subcommands and the suite driver.

Each runner takes validated parameters and returns (result dict, csv text or None).
"""

import csv
import io
import math

import numpy as np

from .exceptional import (
    backward_contraction_probe,
    declared_model,
    local_degree_profile,
    tubular_mass_probe,
    verify_total_invariance,
)
from .fibers import backward_tree
from .maps import critical_points_k1, evaluate_rows, spherical_derivative_sup
from .measures import estimate_mu
from .observables import RegularizationScheme, builtin, regularize
from .operators import invariance_checks, telescope_run
from .projective import ProjectivePoint, fs_distance_rows, random_points
from .rates import (
    RateExperimentConfig,
    default_start,
    fiber_holder_probe,
    log_prefactor_scan,
    run_exceptional_control,
    run_rate_experiment,
)


def jsonable(obj):
    """Plain JSON types; non-finite floats become None, complex numbers [re, im]."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [jsonable(obj.real), jsonable(obj.imag)]
    if isinstance(obj, ProjectivePoint):
        return obj.to_json()
    return obj


def to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# -- fiber ------------------------------------------------------------------------------------


def run_fiber(f, point, n, settings):
    tree = backward_tree(f, point, n, settings)
    expected = f.topological_degree**n
    result = tree.to_json()
    result.update(
        {
            "total_multiplicity": tree.total_multiplicity,
            "expected_mass": expected,
            "mass_conserved": tree.total_multiplicity == expected,
            "distinct_points": len(tree),
        }
    )
    return result, tree.to_csv()


# -- equilibrium measure -----------------------------------------------------------------------


def _chart(v, index=-1):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.delete(v, index, axis=1) / v[:, [index]]


def moment_observables(k):
    """Named chart observables used for moment tables."""
    out = {}
    if k == 1:
        for m in range(1, 5):
            out[f"z^{m}"] = lambda v, m=m: _chart(v)[:, 0] ** m
        out["x"] = lambda v: _chart(v)[:, 0].real
        out["x^2"] = lambda v: _chart(v)[:, 0].real ** 2
        out["abs_log_abs_z"] = lambda v: np.abs(np.log(np.abs(v[:, 0]) / np.abs(v[:, 1])))
        out["annulus_0.9_1.1"] = lambda v: ((np.abs(_chart(v)[:, 0]) > 0.9) & (np.abs(_chart(v)[:, 0]) < 1.1)) * 1.0
    else:
        out["z/t"] = lambda v: _chart(v)[:, 0]
        out["w/t"] = lambda v: _chart(v)[:, 1]
        out["torus_0.9_1.1"] = lambda v: np.all((np.abs(_chart(v)) > 0.9) & (np.abs(_chart(v)) < 1.1), axis=1) * 1.0
    return out


def run_mu(f, settings, samples, burn_in, start=None, invariance=False, moments=False, tube=None):
    start = start if start is not None else default_start(f.dim)
    mu = estimate_mu(f, settings, samples, burn_in, start)
    result = {
        "samples": samples,
        "burn_in": burn_in,
        "start": start.to_json(),
        "pairings": {label: {"value": mu.pair(builtin(label, f.dim)), "stderr": err}
                     for label, err in sorted(mu.stderr_oracle.items())},
    }
    rows = []
    if moments:
        table = {}
        for name, fn in moment_observables(f.dim).items():
            value, err = mu.pair_with_stderr(fn)
            table[name] = {"value": value, "stderr": err}
            v = complex(value)
            rows.append((name, v.real, v.imag, err))
        result["moments"] = table
    if invariance:
        checks = invariance_checks(f, mu, settings=settings)
        result["invariance"] = checks
        result["invariance_ok"] = all(c["ok"] for c in checks.values())
    if tube is not None:
        model = declared_model(f, settings)
        result["tube"] = tubular_mass_probe(mu, model, tube).to_json()
    csv_text = to_csv(["observable", "re", "im", "stderr"], rows) if rows else None
    return result, csv_text, mu


def mu_atoms_json(mu):
    return mu.measure.to_json()


# -- rates -------------------------------------------------------------------------------------


def run_rate(f, settings, mode, point, fns, nmin, nmax, lambda_target, alpha, mu_samples, mu_method, seed,
             a_sequence=None):
    if mode == "prefactor_scan":
        scan = log_prefactor_scan(
            f, fns[0], a_sequence, _n_range(f, nmin, nmax), lambda_target, 2.0 if alpha is None else alpha, settings
        )
        rows = [(l, p, r) for l, p, r in zip(scan.l_values, scan.prefactors, scan.ratios)]
        return scan.to_json(), to_csv(["l_value", "prefactor_A", "ratio"], rows)
    cfg = RateExperimentConfig(f, point, tuple(fns), _n_range(f, nmin, nmax), mu_samples, lambda_target, alpha,
                               seed, mu_method, settings)
    report = run_exceptional_control(cfg) if mode == "control" else run_rate_experiment(cfg)
    result = {"config": cfg.to_json(), "report": report.to_json()}
    return result, to_csv(["n", "e_n", "noise_floor", "in_fit_window"], report.to_csv_rows())


def _n_range(f, nmin, nmax):
    if nmax is None:
        nmax = 10 if f.dim == 1 else 5
    return tuple(range(nmin, nmax + 1))


def run_holder(f, settings, base, direction, scales):
    rep = fiber_holder_probe(f, base, direction, scales, settings)
    rows = list(zip(scales, rep.separations, rep.matching_costs))
    return rep.to_json(), to_csv(["h", "separation", "matching_cost"], rows)


# -- exceptional set -----------------------------------------------------------------------


def probe_points(f, count, seed, settings=None, depth=6):
    """Points for local-degree tables.

    First the exceptional and critical points and their images, then
    generic points: half are endpoints of backward walks (near the support
    of mu), half uniform.  A generic point is kept only if its first
    ``depth`` iterates stay 1e-4 away from other preimages of the next
    iterate; closer orbits cannot be told apart from critical ones at the
    solver's cluster radius.
    """
    from .exceptional import _orbit_data
    from .fibers import SolverSettings, sample_inverse_branches

    settings = settings or SolverSettings()
    special = []
    model = declared_model(f, settings)
    if model is not None:
        special += list(model.points)
        if f.dim == 2:
            # vertices and a point on each declared line
            special += [np.eye(3)[i] for i in range(3)]
            special += [np.array([0, 3, 1]), np.array([2, 0, 1]), np.array([2, 3, 0])]
    if f.dim == 1:
        for p, _ in critical_points_k1(f, settings):
            special.append(p.coords)
            special.append(evaluate_rows(f, p.coords[None, :])[0])
    pts = []
    for p in special:
        p = ProjectivePoint(p)
        if all(fs_distance_rows(p.coords, q.coords) > 1e-9 for q in pts):
            pts.append(p)
    pts = pts[:count]
    rng = np.random.default_rng([seed, 41])
    walks = sample_inverse_branches(f, default_start(f.dim), 20, 4 * count, settings, (seed, 41))
    uniform = random_points(f.dim, 40 * count, rng)
    for pool in (walks, uniform):
        target = len(pts) + (count - len(pts) + 1) // 2 if pool is walks else count
        for x in pool:
            if len(pts) >= target:
                break
            _, radii, bound, _ = _orbit_data(f, x, depth, settings)
            if bound == 1 and min(radii) >= 1e-4 / 3:
                pts.append(ProjectivePoint(x))
    return pts


def run_exceptional(f, settings, mode, n=3, pairs=100, points=None, count=20, t_grid=(), samples=10**5, seed=0):
    if mode == "detect":
        model = declared_model(f, settings)
        if model is None:
            return {"model": None, "note": "no declared exceptional set for this map of P^2"}, None
        worst = verify_total_invariance(f, model, settings)
        return {"model": model.to_json(), "declared": bool(f.exceptional_declared), "invariance_residual": worst}, None
    if mode == "probe-contraction":
        rng = np.random.default_rng([seed, 43])
        a2 = spherical_derivative_sup(f)
        rows, violations, worst = [], 0, math.inf
        for i in range(pairs):
            x, y = random_points(f.dim, 2, rng)
            depth = 1 + i % n
            r = backward_contraction_probe(f, x, y, depth, settings, a2)
            violations += r.violated
            worst = min(worst, r.measured / r.bound)
            rows.append((i, depth, r.measured, r.bound))
        result = {"a2": a2, "pairs": pairs, "max_n": n, "violations": violations, "min_ratio": worst}
        return result, to_csv(["pair", "n", "measured", "bound"], rows)
    if mode == "cocycle":
        pts = [ProjectivePoint(np.array([complex(*c) for c in p])) for p in points] if points else probe_points(
            f, count, seed, settings, n)
        profiles, rows, total = [], [], 0
        for p in pts:
            prof = local_degree_profile(f, p, n, settings)
            bad = prof.cocycle_violations(f, settings)
            total += len(bad)
            profiles.append({**prof.to_json(), "violations": bad})
            rows += [(repr(p), k, v) for k, v in sorted(prof.kappa_n.items())]
        return {"max_n": n, "profiles": profiles, "violations": total}, to_csv(["point", "n", "kappa_n"], rows)
    if mode == "probe-tube":
        model = declared_model(f, settings)
        mu = estimate_mu(f, settings, samples, 20, default_start(f.dim))
        rep = tubular_mass_probe(mu, model, t_grid)
        return rep.to_json(), to_csv(["t", "mass"], list(zip(rep.t_grid, rep.masses)))
    raise ValueError(f"unknown mode {mode!r}")


# -- operators and regularization ------------------------------------------------------------


def run_telescope(f, settings, fn_label, point, levels, m, delta):
    states = telescope_run(builtin(fn_label, f.dim), f, point, levels, m, delta, settings)
    return [s.to_json() for s in states], None


def run_regularize(fn_label, dim, thetas, samples, probe, seed):
    fn = builtin(fn_label, dim)
    thetas = sorted(thetas, reverse=True)
    rng = np.random.default_rng([seed, 47])
    pts = random_points(dim, probe, rng)
    base = fn(pts)
    table, rows = [], []
    for theta in thetas:
        scheme = RegularizationScheme(theta, dim, samples, seed)
        reg = regularize(fn, scheme)
        vals = reg(pts)
        diff = np.abs(vals - base)
        bound = None if fn.grad_sup is None else fn.grad_sup * scheme.displacement_factor_eta * theta
        table.append(
            {
                "theta": theta,
                "eta": scheme.displacement_factor_eta,
                "sup_diff": float(diff.max()),
                "bound": bound,
                "within_bound": None if bound is None else bool(diff.max() <= bound),
                "grad_sup_regularized": reg.grad_sup,
            }
        )
        for p, a, b, c in zip(pts, base, vals, diff):
            rows.append((theta, ProjectivePoint(p).__repr__(), a, b, c))
    sups = [t["sup_diff"] for t in table]
    monotone = all(sups[i + 1] <= 1.1 * sups[i] for i in range(len(sups) - 1))
    result = {"fn": fn_label, "grad_sup": fn.grad_sup, "thetas": table, "monotone": monotone}
    return result, to_csv(["theta", "point", "phi", "phi_theta", "abs_diff"], rows)
