"""Local topological degrees, exceptional sets, and the probes built on them.

``local_degree`` counts, for a generic target z very close to f^n(x), the
preimages under f^n that land near x.  Tracking the count requires the
perturbation of z to be far below the scale at which the local cluster
separates, roughly (r / 20)^kappa, so the pruned backward tree is computed
in mpmath at a precision chosen from an a-priori bound on kappa.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .errors import AmbiguousCount, SolverFailure
from .fibers import SolverSettings, _rng, backward_tree, fiber_rows, raw_preimages
from .maps import (
    critical_points_k1,
    evaluate_rows,
    monomial_exponents,
    spherical_derivative_rows,
    spherical_derivative_sup,
)
from .projective import (
    ProjectivePoint,
    as_rows,
    canonicalize_rows,
    fs_distance_rows,
    pairwise_fs_distance,
    random_unitary,
)
from .roots import mp_roots

PRUNE_CAP = 0.25


# -- exceptional set models -------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExceptionalSetModel:
    """A finite set of points and/or a union of lines {l . y = 0} in P^2."""

    kind: str
    points: np.ndarray
    lines: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=complex))

    def __post_init__(self):
        if self.kind not in ("finite_points", "declared_variety"):
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def is_empty(self):
        return len(self.points) == 0 and len(self.lines) == 0

    @property
    def dim(self):
        if len(self.points):
            return self.points.shape[1] - 1
        return 2 if len(self.lines) else None

    def distance_rows(self, x):
        """Chordal distance from each row of x to the set (1 when the set is empty)."""
        x = as_rows(x)
        out = np.ones(len(x))
        if len(self.points):
            out = np.minimum(out, pairwise_fs_distance(x, self.points).min(axis=1))
        for l in self.lines:
            d = np.abs(x @ l) / (np.linalg.norm(x, axis=1) * np.linalg.norm(l))
            out = np.minimum(out, d)
        return out

    def distance(self, x):
        return float(self.distance_rows(x)[0])

    def variety_distance(self, x):
        return self.distance(x)

    def to_json(self):
        return {
            "kind": self.kind,
            "points": [[[float(c.real), float(c.imag)] for c in p] for p in self.points],
            "lines": [[[float(c.real), float(c.imag)] for c in l] for l in self.lines],
        }


def _model_from_map(f):
    pts = np.array(f.exceptional_points, dtype=complex).reshape(-1, f.dim + 1)
    if len(pts):
        pts = canonicalize_rows(pts)
    lines = np.array(f.exceptional_lines, dtype=complex).reshape(-1, 3)
    kind = "declared_variety" if len(lines) else "finite_points"
    return ExceptionalSetModel(kind, pts, lines)


def declared_model(f, settings=None):
    """The declared exceptional set of f; for undeclared maps of P^1 it is detected.

    Returns None for undeclared maps of P^2.
    """
    if f.exceptional_declared:
        return _model_from_map(f)
    if f.dim == 1:
        return detect_exceptional_k1(f, settings)
    return None


def detect_exceptional_k1(f, settings=None):
    """Largest totally invariant finite set of a map of P^1.

    Candidates are the totally ramified critical points; members whose fiber
    is not a single point inside the set are removed until the set is stable.
    """
    if f.dim != 1:
        raise ValueError("detection is for maps of P^1")
    settings = settings or SolverSettings()
    crit = critical_points_k1(f, settings)
    cand = [p.coords for p, m in crit if m == f.degree - 1]
    changed = True
    while changed and cand:
        changed = False
        rows = np.array(cand)
        for i, x in enumerate(cand):
            (pts, mults), = fiber_rows(f, x, settings)
            ok = len(pts) == 1 and pairwise_fs_distance(pts, rows).min() <= 1e-8
            if not ok:
                cand.pop(i)
                changed = True
                break
    assert len(cand) <= 2, "a map of P^1 has at most two exceptional points"
    pts = canonicalize_rows(np.array(cand)) if cand else np.zeros((0, 2), dtype=complex)
    return ExceptionalSetModel("finite_points", pts)


def verify_total_invariance(f, model, settings=None, samples_per_line=4, seed=0):
    """Largest distance from E of the images and fiber points of sampled members of E."""
    settings = settings or SolverSettings()
    probes = list(model.points)
    rng = np.random.default_rng(seed)
    for l in model.lines:
        # points y with l . y = 0: project random vectors onto the plane orthogonal to conj(l)
        nrm = l.conj() / np.linalg.norm(l)
        for _ in range(samples_per_line):
            v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            probes.append(v - nrm * (nrm.conj() @ v))
    if not probes:
        return 0.0
    probes = canonicalize_rows(np.array(probes))
    worst = float(model.distance_rows(evaluate_rows(f, probes)).max())
    for pts, _ in fiber_rows(f, probes, settings):
        worst = max(worst, float(model.distance_rows(pts).max()))
    return worst


# -- local degree --------------------------------------------------------------


def _mp_vec(v):
    return [mpmath.mpc(complex(c)) for c in v]


def _mp_eval_forms(f, v):
    """Components of the lift at an mp vector."""
    exps = monomial_exponents(f.dim, f.degree)
    pows = [[mpmath.mpf(1)] for _ in v]
    for i, c in enumerate(v):
        for _ in range(f.degree):
            pows[i].append(pows[i][-1] * c)
    monos = []
    for e in exps:
        m = mpmath.mpf(1)
        for i, p in enumerate(e):
            m *= pows[i][p]
        monos.append(m)
    return [mpmath.fsum(mpmath.mpc(complex(c)) * m for c, m in zip(row, monos) if c != 0) for row in f.components]


def _mp_normalize(v):
    nrm = mpmath.sqrt(mpmath.fsum(abs(c) ** 2 for c in v))
    return [c / nrm for c in v]


def _mp_map(f, v):
    return _mp_normalize(_mp_eval_forms(f, v))


def _mp_fs(u, v):
    nu = mpmath.sqrt(mpmath.fsum(abs(c) ** 2 for c in u))
    nv = mpmath.sqrt(mpmath.fsum(abs(c) ** 2 for c in v))
    if len(u) == 2:
        w = abs(u[0] * v[1] - u[1] * v[0])
    else:
        w = mpmath.sqrt(
            abs(u[1] * v[2] - u[2] * v[1]) ** 2
            + abs(u[2] * v[0] - u[0] * v[2]) ** 2
            + abs(u[0] * v[1] - u[1] * v[0]) ** 2
        )
    return w / (nu * nv)


def _to_float(v):
    return np.array([complex(c) for c in v])


def _fiber_form_k1(f, s):
    """Coefficients of s_w P - s_z Q (z^d first)."""
    p, q = f.components
    return [s[1] * mpmath.mpc(complex(a)) - s[0] * mpmath.mpc(complex(b)) for a, b in zip(p, q)]


def _mp_preimages_k1(f, s, near):
    """All preimages of the mp point s, as mp vectors, using the chart that contains ``near``."""
    form = _fiber_form_k1(f, s)
    if abs(near[1]) >= abs(near[0]):
        roots = mp_roots(form, center=near[0] / near[1])
        return [[r, mpmath.mpc(1)] for r in roots]
    roots = mp_roots(form[::-1], center=near[1] / near[0])
    return [[mpmath.mpc(1), r] for r in roots]


def _dft_coeffs(vals):
    """Coefficients c_p (power p) of the polynomial taking vals at the roots of unity."""
    n = len(vals)
    out = []
    for p in range(n):
        out.append(mpmath.fsum(vals[t] * mpmath.expjpi(-2 * p * t / mpmath.mpf(n)) for t in range(n)) / n)
    return out


class _MpElimination:
    """Resultant solver for one random coordinate system of P^2 in mpmath."""

    def __init__(self, f, seed):
        self.f = f
        u = random_unitary(3, np.random.default_rng(seed))
        self.u = [[mpmath.mpc(complex(u[i, j])) for j in range(3)] for i in range(3)]
        self.d = f.degree
        self.unity = {}

    def roots_of_unity(self, n):
        if n not in self.unity:
            self.unity[n] = [mpmath.expjpi(2 * mpmath.mpf(t) / n) for t in range(n)]
        return self.unity[n]

    def lift(self, a, b):
        y = [a, b, mpmath.mpc(1)]
        return [mpmath.fsum(self.u[i][j] * y[j] for j in range(3)) for i in range(3)]

    def equations(self, s, a, b):
        j = max(range(3), key=lambda i: abs(s[i]))
        i1, i2 = (j + 1) % 3, (j + 2) % 3
        g = _mp_eval_forms(self.f, self.lift(a, b))
        return g[i1] * s[j] - g[j] * s[i1], g[i2] * s[j] - g[j] * s[i2]

    def coeffs_in_b(self, s, a):
        nodes = self.roots_of_unity(self.d + 1)
        v1, v2 = zip(*(self.equations(s, a, b) for b in nodes))
        return _dft_coeffs(list(v1)), _dft_coeffs(list(v2))

    def solve(self, s, near):
        d = self.d
        # chart coordinates of ``near`` in the rotated system, used as shift centres
        loc = [mpmath.fsum(self.u[j][i].conjugate() * near[j] for j in range(3)) for i in range(3)]
        ca, cb = loc[0] / loc[2], loc[1] / loc[2]
        nodes = self.roots_of_unity(d * d + 1)
        res = []
        for a in nodes:
            c1, c2 = self.coeffs_in_b(s, a)
            m = mpmath.zeros(2 * d, 2 * d)
            for i in range(d):
                for p in range(d + 1):
                    m[i, i + p] = c1[d - p]
                    m[d + i, i + p] = c2[d - p]
            res.append(mpmath.det(m))
        poly = _dft_coeffs(res)[::-1]
        out = []
        for a in mp_roots(poly, center=ca):
            c1, _ = self.coeffs_in_b(s, a)
            cands = mp_roots(c1[::-1], center=cb)
            if not cands:
                continue
            b = min(cands, key=lambda bb: abs(self.equations(s, a, bb)[1]))
            out.append(self.lift(a, b))
        return out


def _orbit_data(f, x, n, settings):
    """Float orbit x_0..x_n, prune radii r_0..r_{n-1}, the product of cluster
    multiplicities, and the log10 perturbation size the count needs."""
    orbit = [canonicalize_rows(x)]
    for _ in range(n):
        orbit.append(evaluate_rows(f, orbit[-1][None, :])[0])
    radii, bound, mults_on = [], 1, []
    for i in range(n):
        (pts, mults), = fiber_rows(f, orbit[i + 1], settings)
        dist = fs_distance_rows(pts, orbit[i][None, :])
        j = int(np.argmin(dist))
        others = np.delete(dist, j)
        sep = float(others.min()) if len(others) else 1.0
        radii.append(min(PRUNE_CAP, sep / 3))
        bound *= int(mults[j])
        mults_on.append(int(mults[j]))
    # a perturbation eps of x_n moves the level-i preimage by about
    # eps / prod_{j >= i} sigma_min(df at x_j); it must stay well inside r_i
    sig = spherical_derivative_rows(f, np.array(orbit[:n]), smallest=True) if n else np.ones(0)
    need, acc = 0.0, 0.0
    for i in range(n - 1, -1, -1):
        if mults_on[i] == 1:
            acc += math.log10(max(float(sig[i]), 1e-300))
        need = min(need, math.log10(0.01 * radii[i]) + acc)
    return orbit, radii, bound, need


def _count_once(f, x, n, settings, orbit, radii, bound, need, trial):
    rng = _rng(settings, 11, trial)
    r_min = min(radii)
    shrink = 1.0 - 0.25 * trial  # vary the acceptance radius between trials
    # clusters on the orbit turn a displacement eps into eps^(1/m)
    log_eps = bound * min(need, -math.log10(20.0 / r_min)) - 10 - 3 * trial
    dps = int(1.5 * -log_eps) + 30
    with mpmath.workdps(dps):
        xm = _mp_normalize(_mp_vec(x))
        mp_orbit = [xm]
        for _ in range(n):
            mp_orbit.append(_mp_map(f, mp_orbit[-1]))
        top = mp_orbit[-1]
        # random direction orthogonal to the target
        v = _mp_vec(rng.standard_normal(f.dim + 1) + 1j * rng.standard_normal(f.dim + 1))
        ip = mpmath.fsum(c.conjugate() * w for c, w in zip(top, v))
        v = _mp_normalize([w - ip * c for c, w in zip(top, v)])
        eps = mpmath.mpf(10) ** log_eps
        nodes = [_mp_normalize([c + eps * w for c, w in zip(top, v)])]
        elim = _MpElimination(f, [settings.rng_seed, 12, trial]) if f.dim == 2 else None
        for level in range(n - 1, -1, -1):
            target = _to_float(mp_orbit[level])
            # nodes sit at distance delta from the orbit point; about log10(1/delta)
            # digits resolve their preimages, so deep levels run much cheaper
            gap = min(_mp_fs(s, mp_orbit[level + 1]) for s in nodes) if nodes else mpmath.mpf(1)
            need = int(1.3 * -float(mpmath.log10(gap))) + 40 if gap > 0 else dps
            nxt = []
            with mpmath.workdps(min(dps, need)):
                for s in nodes:
                    if f.dim == 1:
                        pre = _mp_preimages_k1(f, s, mp_orbit[level])
                    else:
                        pre = elim.solve(s, mp_orbit[level])
                    for y in pre:
                        yf = _to_float(y)
                        if not np.all(np.isfinite(yf)):
                            continue
                        if fs_distance_rows(yf, target) <= radii[level] * shrink:
                            nxt.append(_mp_normalize(y))
            nodes = nxt
            if len(nodes) > bound * 4 + 4:
                raise SolverFailure(f"local count exploded to {len(nodes)} nodes at level {level}")
    return len(nodes)


def _count_float(f, n, settings, orbit, radii, trial):
    # plain double precision suffices when the orbit meets no cluster
    rng = _rng(settings, 13, trial)
    eps = 10.0 ** (-6 - trial)
    shrink = 1.0 - 0.25 * trial
    top = orbit[-1]
    v = rng.standard_normal(f.dim + 1) + 1j * rng.standard_normal(f.dim + 1)
    v = v - top * (top.conj() @ v)
    nodes = canonicalize_rows(top + eps * v / np.linalg.norm(v))[None, :]
    for level in range(n - 1, -1, -1):
        pre = raw_preimages(f, nodes, settings).reshape(-1, f.dim + 1)
        keep = fs_distance_rows(pre, orbit[level][None, :]) <= radii[level] * shrink
        nodes = pre[keep]
        if len(nodes) == 0:
            break
    return len(nodes)


@lru_cache(maxsize=4096)
def _local_degree_cached(f, key, n, settings, trials):
    x = np.frombuffer(key, dtype=complex)
    orbit, radii, bound, need = _orbit_data(f, x, n, settings)
    fast = bound == 1 and min(radii) >= 1e-3 and need >= -6
    counts = []
    for t in range(trials):
        if fast:
            counts.append(_count_float(f, n, settings, orbit, radii, t))
        else:
            counts.append(_count_once(f, x, n, settings, orbit, radii, bound, need, t))
        value, votes = Counter(counts).most_common(1)[0]
        if votes * 2 > trials:
            break  # the majority is settled
    value, votes = Counter(counts).most_common(1)[0]
    if votes * 2 <= trials:
        raise AmbiguousCount(f"local degree trials disagree: {counts}", counts)
    if value < 1:
        raise SolverFailure(f"local count lost the orbit branch: {counts}")
    return value


def local_degree(f, x, n, settings=None, trials=3):
    """kappa_n(x): preimages under f^n of a generic target near f^n(x) that stay near x.

    Majority over ``trials`` counts with different perturbation directions,
    perturbation sizes and acceptance radii.
    """
    settings = settings or SolverSettings()
    if isinstance(x, ProjectivePoint):
        x = x.coords
    x = canonicalize_rows(np.asarray(x, dtype=complex))
    if n == 0:
        return 1
    if n * f.dim * math.log(f.degree) > math.log(settings.max_tree_nodes) + 1e-12:
        raise ValueError("n too large for max_tree_nodes")
    return _local_degree_cached(f, np.ascontiguousarray(x).tobytes(), n, settings, trials)


def kappa_minus(f, x, n, settings=None, method="tree"):
    """kappa_{-n}(x) = max of kappa_n over f^{-n}(x).

    ``method="tree"`` reads the multiplicities of the backward tree;
    ``method="direct"`` recomputes kappa_n at every distinct fiber point.
    """
    settings = settings or SolverSettings()
    if isinstance(x, ProjectivePoint):
        x = ProjectivePoint(x.coords)
    else:
        x = ProjectivePoint(x)
    tree = backward_tree(f, x, n, settings)
    if method == "tree":
        return int(tree.multiplicities.max())
    if method == "direct":
        return max(local_degree(f, y, n, settings) for y in tree.points)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True, eq=False)
class LocalDegreeProfile:
    point: ProjectivePoint
    kappa_n: dict
    kappa_minus_n: dict
    delta0_estimate: int

    def cocycle_violations(self, f, settings=None):
        """(n, m) pairs where kappa_{n+m}(x) != kappa_m(f^n x) kappa_n(x)."""
        bad = []
        top = max(self.kappa_n)
        for n in range(0, top + 1):
            for m in range(0, top + 1 - n):
                if n + m == 0:
                    continue
                fx = self.point.coords
                for _ in range(n):
                    fx = evaluate_rows(f, fx[None, :])[0]
                lhs = self.kappa_n.get(n + m, 1 if n + m == 0 else None)
                rhs = local_degree(f, fx, m, settings) * self.kappa_n.get(n, 1)
                if lhs != rhs:
                    bad.append((n, m, lhs, rhs))
        return bad

    def to_json(self):
        return {
            "point": self.point.to_json(),
            "kappa_n": {str(k): v for k, v in sorted(self.kappa_n.items())},
            "kappa_minus_n": {str(k): v for k, v in sorted(self.kappa_minus_n.items())},
            "delta0_estimate": self.delta0_estimate,
        }


def delta0_estimate(f, x, settings=None, model=None):
    """Largest multiplicity among the points of f^{-1}(x) that are off the exceptional set."""
    settings = settings or SolverSettings()
    model = model if model is not None else declared_model(f, settings)
    (pts, mults), = fiber_rows(f, as_rows(x)[0], settings)
    if model is not None and not model.is_empty:
        off = model.distance_rows(pts) > 1e-8
        pts, mults = pts[off], mults[off]
    return int(mults.max()) if len(mults) else 0


def local_degree_profile(f, x, nmax, settings=None):
    settings = settings or SolverSettings()
    if not isinstance(x, ProjectivePoint):
        x = ProjectivePoint(x)
    kn = {n: local_degree(f, x, n, settings) for n in range(1, nmax + 1)}
    km = {n: kappa_minus(f, x, n, settings) for n in range(1, nmax + 1)}
    return LocalDegreeProfile(x, kn, km, delta0_estimate(f, x, settings))


# -- probes ----------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionResult:
    measured: float
    bound: float
    a2: float
    violated: bool


def backward_contraction_probe(f, x, y, n, settings=None, a2=None):
    """Minimal distance between f^{-n}(x) and f^{-n}(y) against A2^{-n} dist(x, y)."""
    settings = settings or SolverSettings()
    x = x if isinstance(x, ProjectivePoint) else ProjectivePoint(x)
    y = y if isinstance(y, ProjectivePoint) else ProjectivePoint(y)
    base = float(fs_distance_rows(x.coords, y.coords))
    if base <= 1e-12:
        raise ValueError("x and y must be distinct")
    if a2 is None:
        a2 = spherical_derivative_sup(f)
    tx = backward_tree(f, x, n, settings)
    ty = backward_tree(f, y, n, settings)
    measured = float(pairwise_fs_distance(tx.points, ty.points).min())
    bound = a2**-n * base
    return ContractionResult(measured, bound, a2, measured < bound * (1 - 1e-6))


@dataclass(frozen=True)
class TubularReport:
    t_grid: tuple
    masses: tuple
    fit_window: tuple
    beta_hat: float
    status: str

    def to_json(self):
        return {
            "t_grid": list(self.t_grid),
            "masses": list(self.masses),
            "fit_window": list(self.fit_window),
            "beta_hat": None if math.isnan(self.beta_hat) else self.beta_hat,
            "status": self.status,
        }


def tubular_mass_probe(mu_hat, model, t_grid):
    """Empirical mass of {dist(., E) <= t} and the fitted exponent of mass ~ t^beta."""
    if model is None or model.is_empty:
        raise ValueError("the exceptional set must be nonempty")
    pts = mu_hat.measure.points
    w = mu_hat.measure.weights
    dist = model.distance_rows(pts)
    t_grid = tuple(float(t) for t in t_grid)
    masses = tuple(float(w[dist <= t].sum()) for t in t_grid)
    floor = 10.0 / mu_hat.samples
    window = tuple(i for i, m in enumerate(masses) if m >= floor)
    if len(window) >= 2:
        lt = np.log([t_grid[i] for i in window])
        lm = np.log([masses[i] for i in window])
        beta = float(np.polyfit(lt, lm, 1)[0])
        status = "fitted"
    elif all(m == 0 for m in masses):
        beta, status = float("nan"), "all masses zero"
    else:
        beta, status = float("nan"), "insufficient mass"
    return TubularReport(t_grid, masses, window, beta, status)
