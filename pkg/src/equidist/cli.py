"""Command line entry point: one subcommand per experiment kind plus ``suite``."""

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .config import build_point, experiment_id, experiment_seed, load_config
from .errors import ConfigError, EquidistError
from .fibers import SolverSettings
from .maps import from_json, preset
from .measures import worker_count
from .projective import ProjectivePoint


def dumps(obj):
    return json.dumps(ex.jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def parse_point(text):
    """'inf', homogeneous 'a:b[:c]' (brackets optional), affine 'a[,b]', or JSON [[re, im], ...]."""
    text = text.strip()
    if text.startswith("[["):
        return ProjectivePoint.from_json(json.loads(text))
    if text == "inf":
        return ProjectivePoint([1, 0])
    body = text.strip("[]")
    if ":" in body:
        return ProjectivePoint(np.array([complex(t.replace(" ", "")) for t in body.split(":")]))
    return ProjectivePoint.affine(*[complex(t.replace(" ", "")) for t in body.split(",")])


def load_map(name):
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        return from_json(json.loads(path.read_text()))
    return preset(name)


def _emit(args, result, csv_text=None):
    text = dumps(result)
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if getattr(args, "csv", None) and csv_text is not None:
        Path(args.csv).write_text(csv_text)


def _settings(seed):
    return SolverSettings(rng_seed=seed)


# -- subcommands ------------------------------------------------------------------------------


def cmd_fiber(args):
    f = load_map(args.map)
    result, csv_text = ex.run_fiber(f, parse_point(args.point), args.n, _settings(args.seed))
    _emit(args, result, csv_text)


def cmd_mu(args):
    f = load_map(args.map)
    start = parse_point(args.start) if args.start else None
    result, csv_text, mu = ex.run_mu(f, _settings(args.seed), args.samples, args.burn_in, start,
                                     moments=bool(args.moments))
    if args.out:
        Path(args.out).write_text(dumps({"summary": result, "measure": ex.mu_atoms_json(mu)}))
    else:
        sys.stdout.write(dumps(result))
    if args.moments:
        Path(args.moments).write_text(csv_text)


def cmd_rate(args):
    f = load_map(args.map)
    fns = [s for s in args.fns.split(",") if s]
    result, csv_text = ex.run_rate(f, _settings(args.seed), args.mode, parse_point(args.point), fns, 1, args.nmax,
                                   args.lambda_target, args.alpha, args.mu_samples, args.mu_method, args.seed)
    _emit(args, result, csv_text)


def cmd_holder(args):
    f = load_map(args.map)
    scales = [float(s) for s in args.scales.split(",")] if args.scales else None
    result, csv_text = ex.run_holder(f, _settings(args.seed), parse_point(args.base), None, scales)
    _emit(args, result, csv_text)


def cmd_exceptional(args):
    f = load_map(args.map)
    mode = args.mode
    t_grid = [float(t) for t in args.t_grid.split(",")]
    result, csv_text = ex.run_exceptional(f, _settings(args.seed), mode, n=args.n, pairs=args.pairs,
                                          count=args.probe_points, t_grid=t_grid, samples=args.samples, seed=args.seed)
    _emit(args, result, csv_text)


def cmd_telescope(args):
    f = load_map(args.map)
    result, _ = ex.run_telescope(f, _settings(args.seed), args.fn, parse_point(args.point), args.levels, args.M,
                                 args.delta)
    _emit(args, result)


def cmd_regularize(args):
    thetas = [float(t) for t in args.theta.split(",")]
    result, csv_text = ex.run_regularize(args.fn, args.dim, thetas, args.samples, args.probe_points, args.seed)
    if args.out:
        Path(args.out).write_text(dumps(result))
    sys.stdout.write(csv_text)


def cmd_suite(args):
    suite = load_config(args.config)
    if args.seed is not None:
        suite = suite.with_seed(args.seed)
    out = Path(args.output_dir or suite.output_dir)
    return run_suite(suite, out)


# -- suite driver ---------------------------------------------------------------------------


def run_experiment(suite, exp, index):
    """(report dict, csv text or None) for one experiment; errors are captured in the report."""
    eid = experiment_id(exp, index)
    seed = experiment_seed(suite.seed, eid)
    s = suite.solver
    settings = SolverSettings(s.newton_tolerance, s.max_newton_iters, s.cluster_radius, s.max_tree_nodes, seed)
    csv_text = None
    try:
        if exp.kind == "regularize":
            result, csv_text = ex.run_regularize(exp.fn, exp.dim, exp.thetas, exp.samples, exp.probe_points, seed)
        else:
            f = suite.map_for(exp)
            if exp.kind == "fiber":
                result, csv_text = ex.run_fiber(f, build_point(exp.point), exp.n, settings)
            elif exp.kind == "mu":
                start = build_point(exp.start) if exp.start else None
                result, csv_text, _ = ex.run_mu(f, settings, exp.samples, exp.burn_in, start, exp.invariance,
                                                exp.moments, exp.tube)
            elif exp.kind == "rate":
                point = build_point(exp.point) if exp.point else None
                seq = [build_point(p) for p in exp.a_sequence] if exp.a_sequence else None
                result, csv_text = ex.run_rate(f, settings, exp.mode, point, exp.fns, exp.nmin, exp.nmax,
                                               exp.lambda_target, exp.alpha, exp.mu_samples, exp.mu_method, seed, seq)
            elif exp.kind == "holder":
                direction = [complex(*c) for c in exp.direction] if exp.direction else None
                result, csv_text = ex.run_holder(f, settings, build_point(exp.base), direction, exp.scales)
            elif exp.kind == "exceptional":
                result, csv_text = ex.run_exceptional(f, settings, exp.mode, exp.n, exp.pairs, exp.points,
                                                      exp.probe_points, exp.t_grid, exp.samples, seed)
            elif exp.kind == "telescope":
                result, csv_text = ex.run_telescope(f, settings, exp.fn, build_point(exp.point), exp.levels, exp.M,
                                                    exp.delta)
        status, error = "ok", None
    except (EquidistError, ValueError, ArithmeticError, RuntimeError) as exc:
        result, status = None, "error"
        error = {"type": type(exc).__name__, "message": str(exc)}
    report = {
        "id": eid,
        "kind": exp.kind,
        "seed": seed,
        "experiment": exp.model_dump(mode="json", by_alias=True),
        "status": status,
        "result": result,
        "error": error,
    }
    return report, csv_text if status == "ok" and getattr(exp, "csv", True) else None


def _verdict(report):
    res = report.get("result")
    if not isinstance(res, dict):
        return None
    for key in ("verdict", "mass_conserved", "invariance_ok", "monotone", "violations"):
        if key in res:
            return res[key]
    if "report" in res:
        return res["report"].get("verdict")
    return None


def run_suite(suite, out):
    """Run every experiment, write one report per experiment and a summary; 0 iff none errored."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    config_hash = hashlib.sha256(suite.canonical_json().encode()).hexdigest()
    header = {"config_hash": config_hash, "seed": suite.seed, "version": __version__}

    def task(i):
        t0 = time.perf_counter()
        report, csv_text = run_experiment(suite, suite.experiments[i], i)
        return report, csv_text, time.perf_counter() - t0

    workers = min(worker_count(), max(1, len(suite.experiments)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(task, range(len(suite.experiments))))
    else:
        results = [task(i) for i in range(len(suite.experiments))]
    rows, timings = [], {}
    for report, csv_text, seconds in results:
        eid = report["id"]
        (out / f"{eid}.json").write_text(dumps({**header, **report}))
        if csv_text is not None:
            (out / f"{eid}.csv").write_text(csv_text)
        timings[eid] = round(seconds, 3)
        rows.append({"id": eid, "kind": report["kind"], "status": report["status"], "verdict": _verdict(report),
                     "error": report["error"]})
    (out / "summary.json").write_text(dumps({**header, "experiments": rows}))
    # wall-clock times vary between runs, so they live outside the reports
    (out / "timings.json").write_text(dumps(timings))
    return 0 if all(r["status"] == "ok" for r in rows) else 1


# -- parser -----------------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="equidist", description="Equidistribution experiments for maps of P^1 and P^2.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_map=True):
        if with_map:
            sp.add_argument("--map", required=True, help="preset name or path to a JSON map")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="write JSON here instead of stdout")

    sp = sub.add_parser("fiber", help="backward tree f^-n(point)")
    common(sp)
    sp.add_argument("--point", required=True)
    sp.add_argument("-n", "--n", type=int, default=1)
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_fiber)

    sp = sub.add_parser("mu-sample", help="Monte Carlo equilibrium measure")
    common(sp)
    sp.add_argument("--samples", type=int, default=10**5)
    sp.add_argument("--burn-in", type=int, default=20)
    sp.add_argument("--start")
    sp.add_argument("--moments", help="write observable pairings with stderr as CSV")
    sp.set_defaults(func=cmd_mu)

    sp = sub.add_parser("rate", help="convergence rate of fiber measures")
    common(sp)
    sp.add_argument("--point", required=True)
    sp.add_argument("--fns", default="Z")
    sp.add_argument("--nmax", type=int)
    sp.add_argument("--lambda", dest="lambda_target", type=float, default=1.9)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--mu-samples", type=int, default=10**5)
    sp.add_argument("--mu-method", choices=("auto", "exact", "mc"), default="auto")
    sp.add_argument("--mode", choices=("rate", "control"), default="rate")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_rate)

    sp = sub.add_parser("holder", help="fiber continuity exponent")
    common(sp)
    sp.add_argument("--base", required=True)
    sp.add_argument("--scales", help="comma-separated scales in [1e-8, 1e-2]")
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_holder)

    sp = sub.add_parser("exceptional-scan", help="exceptional set detection and probes")
    common(sp)
    sp.add_argument("--mode", choices=("detect", "probe-tube", "probe-contraction", "cocycle"), default="detect")
    sp.add_argument("-n", "--n", type=int, default=3)
    sp.add_argument("--pairs", type=int, default=100)
    sp.add_argument("--probe-points", type=int, default=20)
    sp.add_argument("--t-grid", default="0.05,0.1,0.2,0.3,0.4")
    sp.add_argument("--samples", type=int, default=10**5)
    sp.add_argument("--csv")
    sp.set_defaults(func=cmd_exceptional)

    sp = sub.add_parser("telescope", help="regularized iteration of Lambda")
    common(sp)
    sp.add_argument("--fn", default="X")
    sp.add_argument("--point", required=True)
    sp.add_argument("--levels", type=int, default=4)
    sp.add_argument("--M", type=float, default=1.0)
    sp.add_argument("--delta", type=float, default=1.5)
    sp.set_defaults(func=cmd_telescope)

    sp = sub.add_parser("regularize", help="theta-regularization of an observable (CSV on stdout)")
    common(sp, with_map=False)
    sp.add_argument("--fn", default="X")
    sp.add_argument("--dim", type=int, choices=(1, 2), default=1)
    sp.add_argument("--theta", default="0.1", help="one value or a comma-separated list")
    sp.add_argument("--samples", type=int, default=100, help="number of frozen group draws")
    sp.add_argument("--probe-points", type=int, default=1000)
    sp.set_defaults(func=cmd_regularize)

    sp = sub.add_parser("suite", help="run a JSON experiment suite")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_suite)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EquidistError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
