"""Convergence-rate experiments for fiber measures, exceptional controls,
log-prefactor scans and the fiber Hoelder probe."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InsufficientSignal
from .exceptional import declared_model
from .fibers import SolverSettings, backward_tree, fiber_rows
from .measures import estimate_mu, pair, reference_measure
from .observables import builtin
from .projective import ProjectivePoint, as_rows, from_chart_rows, pairwise_fs_distance, to_chart_rows

MIN_FIT_POINTS = 3
EXACT_FLOOR = 1e-12


def default_start(k):
    """A fixed start for Monte Carlo walks, away from every preset's exceptional set."""
    return ProjectivePoint([0.31 + 0.17j, 1.0] if k == 1 else [0.31 + 0.17j, 0.57 - 0.2j, 1.0])


@dataclass(frozen=True)
class RateExperimentConfig:
    map: object
    a: ProjectivePoint
    fn_labels: tuple = ("Z",)
    n_range: tuple = None
    mu_samples: int = 10**5
    lambda_target: float = 1.9
    alpha: float = None
    seed: int = 0
    mu_method: str = "auto"
    solver: SolverSettings = None

    def __post_init__(self):
        f = self.map
        if not isinstance(self.a, ProjectivePoint):
            object.__setattr__(self, "a", ProjectivePoint(self.a))
        if self.n_range is None:
            object.__setattr__(self, "n_range", tuple(range(1, 11 if f.dim == 1 else 6)))
        object.__setattr__(self, "n_range", tuple(int(n) for n in self.n_range))
        object.__setattr__(self, "fn_labels", tuple(self.fn_labels))
        if self.solver is None:
            object.__setattr__(self, "solver", SolverSettings(rng_seed=self.seed))
        if not self.n_range or min(self.n_range) < 1:
            raise ValueError("n_range must be nonempty with n >= 1")
        if f.topological_degree ** max(self.n_range) > self.solver.max_tree_nodes:
            raise ValueError("d^(k max n) exceeds max_tree_nodes")
        if not 1 < self.lambda_target < f.degree:
            raise ValueError("lambda_target must lie in (1, d)")
        if self.alpha is not None and not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if self.mu_method not in ("auto", "exact", "mc"):
            raise ValueError("mu_method must be auto, exact or mc")

    def functions(self):
        return [builtin(label, self.map.dim) for label in self.fn_labels]

    def effective_alpha(self):
        if self.alpha is not None:
            return float(self.alpha)
        return min(2.0, min(fn.holder_alpha for fn in self.functions()))

    def to_json(self):
        return {
            "map": self.map.label,
            "a": self.a.to_json(),
            "fn_labels": list(self.fn_labels),
            "n_range": list(self.n_range),
            "mu_samples": self.mu_samples,
            "lambda_target": self.lambda_target,
            "alpha": self.effective_alpha(),
            "seed": self.seed,
            "mu_method": self.mu_method,
        }


@dataclass(frozen=True)
class RateReport:
    e_n: dict
    noise_floor: float
    fit_window: tuple
    fitted_rate_rho: float
    prefactor_A: float
    l_value: float
    verdict: str
    target_rate: float
    mu_reference: str
    per_function: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "e_n": {str(n): v for n, v in sorted(self.e_n.items())},
            "noise_floor": self.noise_floor,
            "fit_window": list(self.fit_window),
            "fitted_rate_rho": None if math.isnan(self.fitted_rate_rho) else self.fitted_rate_rho,
            "prefactor_A": self.prefactor_A,
            "l_value": self.l_value,
            "verdict": self.verdict,
            "target_rate": self.target_rate,
            "mu_reference": self.mu_reference,
            "per_function": {
                k: {str(n): v for n, v in sorted(t.items())} for k, t in sorted(self.per_function.items())
            },
        }

    def to_csv_rows(self):
        window = set(self.fit_window)
        return [(n, self.e_n[n], self.noise_floor, n in window) for n in sorted(self.e_n)]


def target_rate(lambda_target, alpha):
    return lambda_target ** (-alpha / 2)


def rate_verdict(rho, lambda_target, alpha):
    """pass iff the fitted rate is at most lambda^(-alpha/2)."""
    if math.isnan(rho):
        return "inconclusive"
    return "pass" if rho <= target_rate(lambda_target, alpha) else "fail"


def fit_rate(e_n, floor):
    """(window, rho) from least squares of log e_n on n over entries above ``floor``."""
    window = tuple(n for n in sorted(e_n) if e_n[n] > floor)
    if len(window) < MIN_FIT_POINTS:
        raise InsufficientSignal(f"only {len(window)} of {len(e_n)} values above the noise floor {floor:.3g}")
    slope = np.polyfit(np.array(window, float), np.log([e_n[n] for n in window]), 1)[0]
    return window, float(math.exp(slope))


def l_value(f, a, settings=None):
    """1 + log+(1 / dist(a, E)), with dist(a, empty set) = 1."""
    model = declared_model(f, settings)
    if model is None or model.is_empty:
        return 1.0
    dist = float(model.distance(a))
    return 1.0 + max(0.0, math.log(1.0 / dist)) if dist > 0 else math.inf


def mu_pairings(cfg, fns):
    """{label: (value, floor)} for the reference pairings <mu, phi>."""
    f = cfg.map
    ref = None if cfg.mu_method == "mc" else reference_measure(f)
    if cfg.mu_method == "exact" and ref is None:
        raise ValueError(f"no exact equilibrium measure is known for {f.label}")
    if ref is not None:
        coarse = reference_measure(f, nodes=len(ref) // 4)
        out = {}
        for fn in fns:
            v = pair(ref, fn)
            # quadrature error estimated against a coarser rule
            out[fn.label] = (v, max(EXACT_FLOOR, 3 * abs(v - pair(coarse, fn))))
        return out, "exact"
    mu = estimate_mu(f, cfg.solver, cfg.mu_samples, start=default_start(f.dim), suite=fns)
    return {fn.label: (mu.pair(fn), 3 * mu.stderr(fn)) for fn in fns}, "mc"


def fiber_errors(cfg, fns, reference):
    """{label: {n: |<nu_n, phi> - <mu, phi>|}}."""
    f = cfg.map
    trees = backward_tree(f, cfg.a, max(cfg.n_range), cfg.solver, levels=True)
    out = {}
    for fn in fns:
        ref = reference[fn.label][0]
        table = {}
        for n in cfg.n_range:
            tree = trees[n]
            vals = fn.func(tree.points)
            table[n] = abs(float(vals @ tree.multiplicities) / float(f.topological_degree**n) - ref)
        out[fn.label] = table
    return out


def _report(cfg, per_fn, floors, source, exceptional=False):
    alpha = cfg.effective_alpha()
    # the worst observable at each n (normalized pairings are not needed: one label per run in practice)
    e_n = {n: max(t[n] for t in per_fn.values()) for n in cfg.n_range}
    floor = max(floors.values())
    lam = cfg.lambda_target
    prefactor = max(e * lam ** (alpha * n / 2) for n, e in e_n.items())
    lv = l_value(cfg.map, cfg.a, cfg.solver)
    if exceptional:
        peak = max(e_n.values())
        last = e_n[max(e_n)]
        verdict = "non-convergent" if peak >= 0.1 and last >= 0.5 * peak else "convergent"
        window = tuple(n for n in sorted(e_n) if e_n[n] > floor)
        rho = float("nan")
        if len(window) >= MIN_FIT_POINTS:
            rho = float(math.exp(np.polyfit(window, np.log([e_n[n] for n in window]), 1)[0]))
    else:
        try:
            window, rho = fit_rate(e_n, floor)
        except InsufficientSignal:
            window, rho = (), float("nan")
        verdict = rate_verdict(rho, lam, alpha)
    return RateReport(e_n, floor, window, rho, prefactor, lv, verdict, target_rate(lam, alpha), source, per_fn)


def run_rate_experiment(cfg):
    """e_n = |<nu_n - mu, phi>| for n in n_range, and the fitted geometric rate."""
    model = declared_model(cfg.map, cfg.solver)
    if model is not None and not model.is_empty and model.distance(cfg.a) <= 1e-9:
        raise ValueError("a lies on the exceptional set; use run_exceptional_control")
    fns = cfg.functions()
    reference, source = mu_pairings(cfg, fns)
    per_fn = fiber_errors(cfg, fns, reference)
    return _report(cfg, per_fn, {k: v[1] for k, v in reference.items()}, source)


def run_exceptional_control(cfg):
    """Rate experiment started on the exceptional set, where nu_n must not converge."""
    model = declared_model(cfg.map, cfg.solver)
    if model is None or model.is_empty or model.distance(cfg.a) > 1e-9:
        raise ValueError("a must lie within 1e-9 of the declared exceptional set")
    fns = cfg.functions()
    reference, source = mu_pairings(cfg, fns)
    per_fn = fiber_errors(cfg, fns, reference)
    return _report(cfg, per_fn, {k: v[1] for k, v in reference.items()}, source, exceptional=True)


@dataclass(frozen=True)
class PrefactorScan:
    l_values: tuple
    prefactors: tuple
    ratios: tuple
    spread: float
    verdict: str

    def to_json(self):
        return {
            "l_values": list(self.l_values),
            "prefactors": list(self.prefactors),
            "ratios": list(self.ratios),
            "spread": self.spread,
            "verdict": self.verdict,
        }


def log_prefactor_scan(f, fn_label="Z", a_sequence=None, n_range=None, lambda_target=1.9, alpha=2.0,
                       settings=None, spread_limit=4.0):
    """prefactor_A against l = 1 + log+(1/dist(a, E)) along a sequence approaching E."""
    if a_sequence is None:
        a_sequence = [ProjectivePoint.affine(10.0**-j) for j in range(2, 9)]
    ls, prefs = [], []
    for a in a_sequence:
        cfg = RateExperimentConfig(f, a, (fn_label,), n_range, lambda_target=lambda_target, alpha=alpha,
                                   solver=settings)
        rep = run_rate_experiment(cfg)
        ls.append(rep.l_value)
        prefs.append(rep.prefactor_A)
    ratios = tuple(p / l ** (alpha / 2) for p, l in zip(prefs, ls))
    spread = max(ratios) / min(ratios)
    return PrefactorScan(tuple(ls), tuple(prefs), ratios, spread, "pass" if spread < spread_limit else "fail")


# -- fiber Hoelder probe -------------------------------------------------------------------


@dataclass(frozen=True)
class HolderProbeReport:
    base_pair: tuple
    separations: tuple
    matching_costs: tuple
    fitted_exponent: float
    local_multiplicity_m: int

    def to_json(self):
        return {
            "base": self.base_pair[0].to_json(),
            "direction": [[float(c.real), float(c.imag)] for c in self.base_pair[1]],
            "separations": list(self.separations),
            "matching_costs": list(self.matching_costs),
            "fitted_exponent": self.fitted_exponent,
            "local_multiplicity_m": self.local_multiplicity_m,
        }


def matching_cost(xs, ys):
    """Largest distance in a minimal-cost perfect matching of two equal-size atom lists."""
    cost = pairwise_fs_distance(xs, ys)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def fiber_holder_probe(f, base, direction=None, scales=None, settings=None):
    """Exponent of fiber continuity: slope of log(matching cost) against log h."""
    settings = settings or SolverSettings()
    base = base if isinstance(base, ProjectivePoint) else ProjectivePoint(base)
    k = f.dim
    if direction is None:
        direction = np.exp(1j * np.linspace(0.3, 1.1, k))
    direction = np.asarray(direction, dtype=complex).ravel()
    if direction.shape != (k,) or not np.linalg.norm(direction) > 0:
        raise ValueError("direction must be a nonzero vector of length k")
    direction = direction / np.linalg.norm(direction)
    if scales is None:
        scales = np.logspace(-8, -2, 7)
    scales = tuple(float(h) for h in scales)
    if min(scales) < 1e-8 * (1 - 1e-9) or max(scales) > 1e-2 * (1 + 1e-9):
        raise ValueError("scales must lie in [1e-8, 1e-2]")
    chart = int(np.argmax(np.abs(base.coords)))
    z = to_chart_rows(base.coords[None, :], chart)
    ys = from_chart_rows(z + np.array(scales)[:, None] * direction[None, :], chart)
    (xp, xm), = fiber_rows(f, base.coords[None, :], settings)
    x_atoms = np.repeat(xp, xm, axis=0)
    groups = fiber_rows(f, ys, settings)
    seps, costs = [], []
    for y, (yp, ym) in zip(ys, groups):
        seps.append(float(pairwise_fs_distance(base.coords[None, :], as_rows(y))[0, 0]))
        costs.append(matching_cost(x_atoms, np.repeat(yp, ym, axis=0)))
    slope = float(np.polyfit(np.log(scales), np.log(costs), 1)[0])
    return HolderProbeReport((base, direction), tuple(seps), tuple(costs), slope, int(xm.max()))
