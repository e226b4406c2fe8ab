"""Fibers f^{-1}(x) and backward orbits f^{-n}(a) counted with multiplicity.

Two layers:

* ``raw_preimages`` returns, for a batch of targets, all d^k preimages as
  unclustered roots (a multiple preimage appears as several nearby rows).
  Sums and uniform draws over raw roots are already multiplicity-weighted,
  so pushforwards and branch sampling use this layer directly.
* ``fiber_rows`` clusters the raw roots into distinct points with integer
  multiplicities; ``fiber_k1``, ``fiber_k2`` and ``backward_tree`` build on it.

For k = 1 the fiber equation P(y) x_w - Q(y) x_z = 0 is solved by Aberth
iteration in a randomly rotated chart.  For k = 2 a random unitary change of
coordinates is applied, one affine variable is eliminated with a Sylvester
resultant (interpolated on roots of unity), and the pairs are Newton refined.
"""

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateFiber, EliminationDegenerate, SolverFailure, TreeTooLarge
from .maps import compose_linear, evaluate_rows, monomial_exponents
from .projective import (
    ProjectivePoint,
    as_rows,
    canonical_order,
    canonicalize_rows,
    fs_distance_rows,
    random_unitary,
)
from .roots import aberth, cluster_roots, min_separation, polish

MAX_ATTEMPTS = 5
RESIDUAL_LIMIT = 1e-8


@dataclass(frozen=True)
class SolverSettings:
    newton_tolerance: float = 1e-12
    max_newton_iters: int = 60
    cluster_radius: float = 1e-7
    max_tree_nodes: int = 10**7
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.newton_tolerance > 0 and self.cluster_radius > 0):
            raise ValueError("tolerances must be positive")
        if not self.cluster_radius > self.newton_tolerance:
            raise ValueError("cluster_radius must exceed newton_tolerance")
        if self.max_newton_iters < 1 or self.max_tree_nodes < 1:
            raise ValueError("iteration and node limits must be positive")


@dataclass(frozen=True, eq=False)
class WeightedFiber:
    """Points of f^{-n}(base) with multiplicities summing to d^{kn}."""

    base_point: ProjectivePoint
    n: int
    points: np.ndarray
    multiplicities: np.ndarray
    residual: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_multiplicity(self):
        return int(self.multiplicities.sum())

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        for p, m in zip(self.points, self.multiplicities):
            yield ProjectivePoint(p), int(m)

    def expanded(self):
        """Rows repeated according to multiplicity."""
        return np.repeat(self.points, self.multiplicities, axis=0)

    def to_json(self):
        return {
            "base": self.base_point.to_json(),
            "n": self.n,
            "points": [
                {"coords": [[float(c.real), float(c.imag)] for c in p], "multiplicity": int(m)}
                for p, m in zip(self.points, self.multiplicities)
            ],
            "residual": float(self.residual),
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        k = self.points.shape[1] - 1
        header = []
        for i in range(k + 1):
            header += [f"re{i}", f"im{i}"]
        writer.writerow(header + ["multiplicity"])
        for p, m in zip(self.points, self.multiplicities):
            row = []
            for c in p:
                row += [repr(float(c.real)), repr(float(c.imag))]
            writer.writerow(row + [int(m)])
        return buf.getvalue()


def _rng(settings, *tags):
    return np.random.default_rng([settings.rng_seed & (2**63 - 1), *tags])


# -- k = 1 --------------------------------------------------------------------------


def _binary_rotation(deg, settings, attempt):
    return _rotation_cached(deg, settings.rng_seed, attempt)


@lru_cache(maxsize=256)
def _rotation_cached(deg, seed, attempt):
    u = random_unitary(2, np.random.default_rng([seed & (2**63 - 1), 1, attempt]))
    # coefficient transform of binary forms of degree deg under (z, w) -> u (z, w)
    t = compose_linear(np.eye(deg + 1), u)
    u.setflags(write=False)
    t.setflags(write=False)
    return u, t


def _raw_binary_roots(forms, settings):
    """Raw roots of binary forms (rows, leading z^D first) as unit vectors (N, D, 2)."""
    forms = np.atleast_2d(np.asarray(forms, dtype=complex))
    n, m = forms.shape
    deg = m - 1
    out = np.empty((n, deg, 2), dtype=complex)
    chart = np.empty((n, deg), dtype=complex)
    coeffs = np.empty((n, m), dtype=complex)
    rot = np.empty(n, dtype=int)
    pending = np.arange(n)
    for attempt in range(MAX_ATTEMPTS):
        if pending.size == 0:
            break
        u, transform = _binary_rotation(deg, settings, attempt)
        g = forms[pending] @ transform
        scale = np.abs(g).max(axis=1)
        ok = np.abs(g[:, 0]) > 1e-8 * scale
        roots = np.zeros((pending.size, deg), dtype=complex)
        if np.any(ok):
            r, conv = aberth(g[ok])
            r = polish(g[ok], r)
            roots[ok] = r
            ok_idx = np.nonzero(ok)[0]
            ok[ok_idx[~conv]] = False
        rows = pending[ok]
        y = np.stack([roots[ok], np.ones_like(roots[ok])], axis=-1) @ u.T
        out[rows] = canonicalize_rows(y.reshape(-1, 2)).reshape(-1, deg, 2)
        chart[rows] = roots[ok]
        coeffs[rows] = g[ok]
        rot[rows] = attempt
        pending = pending[~ok]
    if pending.size:
        raise DegenerateFiber(
            f"fiber equation degenerate in {MAX_ATTEMPTS} rotated charts", path=pending[:1].tolist()
        )
    return out, chart, coeffs, rot


def _fiber_forms_k1(f, x):
    p, q = f.components
    return x[:, 1:2] * p[None, :] - x[:, 0:1] * q[None, :]


def binary_form_roots(form, settings):
    """Distinct roots of one binary form with multiplicities.

    Returns (points (m, 2), multiplicities (m,), residual) where the residual
    is the largest |B(y)| / (|B| |y|^D) over the returned points.
    """
    form = np.asarray(form, dtype=complex)
    raw, chart, coeffs, rot = _raw_binary_roots(form[None, :], settings)
    u, _ = _binary_rotation(len(form) - 1, settings, int(rot[0]))
    clusters = cluster_roots(coeffs[0], chart[0], settings.cluster_radius)
    pts = canonicalize_rows(np.array([u @ np.array([c, 1.0]) for c, _ in clusters]))
    mults = np.array([m for _, m in clusters], dtype=int)
    from .maps import eval_forms as _ev

    vals = np.abs(_ev(form[None, :], pts))[:, 0] / np.abs(form).max()
    order = canonical_order(pts)
    return pts[order], mults[order], float(vals.max() if len(vals) else 0.0)


# -- k = 2 --------------------------------------------------------------------------------


class _Elimination:
    """Chart data for one random rotation of P^2."""

    def __init__(self, f, settings, attempt):
        self.u = random_unitary(3, _rng(settings, 2, attempt))
        self.g = compose_linear(f.components, self.u)
        self.d = f.degree
        exps = monomial_exponents(2, self.d)
        self.exps = exps
        # e_q(a) = sum_a E[(a, q, d-a-q)] a^power : index and power tables per q
        self.by_q = []
        for q in range(self.d + 1):
            idx = [i for i, e in enumerate(exps) if e[1] == q]
            pw = [exps[i][0] for i in idx]
            self.by_q.append((np.array(idx), np.array(pw)))


def _equations_k2(elim, x):
    j = np.argmax(np.abs(x), axis=1)
    i1 = (j + 1) % 3
    i2 = (j + 2) % 3
    rows = np.arange(len(x))
    g = elim.g
    e1 = g[i1] * x[rows, j][:, None] - g[j] * x[rows, i1][:, None]
    e2 = g[i2] * x[rows, j][:, None] - g[j] * x[rows, i2][:, None]
    return e1, e2


def _coeffs_in_w(elim, e, a):
    """Coefficients of e(a, w) in w, leading (w^d) first.  e: (N, M), a: (N, R) -> (N, R, d+1)."""
    d = elim.d
    out = np.zeros(a.shape + (d + 1,), dtype=complex)
    for q, (idx, pw) in enumerate(elim.by_q):
        vals = e[:, None, idx] * a[:, :, None] ** pw[None, None, :]
        out[..., d - q] = vals.sum(axis=-1)
    return out


def _sylvester(p1, p2):
    """Sylvester matrices of two batches of degree-d coefficient vectors (..., d+1)."""
    d = p1.shape[-1] - 1
    s = np.zeros(p1.shape[:-1] + (2 * d, 2 * d), dtype=complex)
    for i in range(d):
        s[..., i, i : i + d + 1] = p1
        s[..., d + i, i : i + d + 1] = p2
    return s


def _newton_k2(elim, e1, e2, a, b, settings):
    """Newton iteration on the affine system (e1, e2)(a, b, 1) = 0, batched over roots."""
    n, r = a.shape
    e1r = np.repeat(e1, r, axis=0)
    e2r = np.repeat(e2, r, axis=0)
    aa = a.reshape(-1).copy()
    bb = b.reshape(-1).copy()
    active = np.ones(aa.shape, bool)
    for _ in range(settings.max_newton_iters):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        v = np.stack([aa[idx], bb[idx], np.ones(idx.size)], axis=1)
        f1 = np.einsum("nm,nm->n", _monos(v, elim.d), e1r[idx])
        f2 = np.einsum("nm,nm->n", _monos(v, elim.d), e2r[idx])
        j1 = _grad(e1r[idx], v, elim.d)
        j2 = _grad(e2r[idx], v, elim.d)
        det = j1[:, 0] * j2[:, 1] - j1[:, 1] * j2[:, 0]
        with np.errstate(all="ignore"):
            da = (f1 * j2[:, 1] - f2 * j1[:, 1]) / det
            db = (j1[:, 0] * f2 - j2[:, 0] * f1) / det
        good = np.isfinite(da) & np.isfinite(db)
        da[~good] = 0
        db[~good] = 0
        aa[idx] -= da
        bb[idx] -= db
        size = np.abs(da) + np.abs(db)
        conv = (size <= settings.newton_tolerance * (1 + np.abs(aa[idx]) + np.abs(bb[idx]))) | ~good
        conv |= (f1 == 0) & (f2 == 0)
        active[idx[conv]] = False
    return aa.reshape(n, r), bb.reshape(n, r)


def _monos(v, d):
    from .maps import eval_monomials

    return eval_monomials(v, d)


def _grad(e, v, d):
    # derivative of each row form e (N, M) at rows of v (N, 3) w.r.t. the first two variables
    from .maps import eval_monomials

    exps = monomial_exponents(2, d)
    low = eval_monomials(v, d - 1)
    index = {tuple(x): i for i, x in enumerate(monomial_exponents(2, d - 1))}
    out = np.zeros((v.shape[0], 2), dtype=complex)
    for var in range(2):
        cols = []
        for m, ex in enumerate(exps):
            if ex[var] > 0:
                ex2 = list(ex)
                ex2[var] -= 1
                cols.append((m, index[tuple(ex2)], ex[var]))
        for m, lo, fac in cols:
            out[:, var] += e[:, m] * low[:, lo] * fac
    return out


def _raw_k2_attempt(f, x, settings, attempt):
    elim = _Elimination(f, settings, attempt)
    d = elim.d
    e1, e2 = _equations_k2(elim, x)
    n = len(x)
    nodes = d * d + 1
    zeta = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    za = np.broadcast_to(zeta, (n, nodes))
    c1 = _coeffs_in_w(elim, e1, za)
    c2 = _coeffs_in_w(elim, e2, za)
    vals = np.linalg.det(_sylvester(c1, c2))
    res = np.fft.fft(vals, axis=1) / nodes  # coefficient of a^p at index p
    poly = res[:, ::-1]  # leading first
    scale = np.abs(poly).max(axis=1)
    ok = np.abs(poly[:, 0]) > 1e-9 * scale
    a = np.zeros((n, d * d), dtype=complex)
    if np.any(ok):
        r, conv = aberth(poly[ok])
        r = polish(poly[ok], r)
        a[ok] = r
        ok_idx = np.nonzero(ok)[0]
        ok[ok_idx[~conv]] = False
    # back-substitution: roots of e1(a, .) ranked by |e2|
    cw1 = _coeffs_in_w(elim, e1, a)
    cw2 = _coeffs_in_w(elim, e2, a)
    flat1 = cw1.reshape(-1, d + 1)
    lead_ok = np.abs(flat1[:, 0]) > 1e-12 * np.abs(flat1).max(axis=1)
    b = np.zeros(a.shape, dtype=complex)
    if np.any(lead_ok):
        wr = np.zeros((flat1.shape[0], d), dtype=complex)
        wr[lead_ok], _ = aberth(flat1[lead_ok])
        wr = wr.reshape(n, d * d, d)
        # evaluate e2 at each candidate
        flat2 = cw2[:, :, None, :]
        pw = wr[..., None] ** np.arange(d, -1, -1)
        val2 = np.abs((flat2 * pw).sum(axis=-1))
        best = np.argmin(val2, axis=-1)
        b = np.take_along_axis(wr, best[..., None], axis=-1)[..., 0]
    ok &= lead_ok.reshape(n, d * d).all(axis=1)
    a, b = _newton_k2(elim, e1, e2, a, b, settings)
    y = np.stack([a, b, np.ones_like(a)], axis=-1) @ elim.u.T
    with np.errstate(all="ignore"):
        y = y / np.linalg.norm(y, axis=-1, keepdims=True)
    ok &= np.all(np.isfinite(y), axis=(1, 2))
    return y, ok, elim, (a, b, e1, e2)


def _raw_k2(f, x, settings):
    n = len(x)
    deg = f.degree**2
    out = np.empty((n, deg, 3), dtype=complex)
    extra = [None] * n
    pending = np.arange(n)
    for attempt in range(MAX_ATTEMPTS):
        if pending.size == 0:
            break
        y, ok, elim, (a, b, e1, e2) = _raw_k2_attempt(f, x[pending], settings, attempt)
        okk = ok.copy()
        if np.any(ok):
            yy = canonicalize_rows(y[ok].reshape(-1, 3))
            img = evaluate_rows(f, yy)
            resid = fs_distance_rows(img, np.repeat(x[pending][ok], deg, axis=0)).reshape(-1, deg)
            good = resid.max(axis=1) <= RESIDUAL_LIMIT
            idx = np.nonzero(ok)[0]
            okk[idx[~good]] = False
            out[pending[okk]] = yy.reshape(-1, deg, 3)[good]
            for local, row in zip(np.nonzero(okk)[0], pending[okk]):
                extra[row] = (attempt, a[local], b[local], e1[local], e2[local])
        pending = pending[~okk]
    if pending.size:
        raise EliminationDegenerate(
            f"elimination failed in {MAX_ATTEMPTS} random coordinate systems", path=pending[:1].tolist()
        )
    return out, extra


# -- public batch API ------------------------------------------------------------------------------


def raw_preimages(f, x, settings=None):
    """All d^k preimages of each row of x as unit vectors, shape (N, d^k, k+1).

    Multiple preimages appear repeated (as numerically close rows).
    """
    settings = settings or SolverSettings()
    x = canonicalize_rows(as_rows(x))
    if f.dim == 1:
        raw, *_ = _raw_binary_roots(_fiber_forms_k1(f, x), settings)
        return raw
    raw, _ = _raw_k2(f, x, settings)
    return raw


def _cluster_k1(f, x, settings):
    forms = _fiber_forms_k1(f, x)
    raw, chart, coeffs, rot = _raw_binary_roots(forms, settings)
    sep = min_separation(chart)
    out = []
    rotations = {}
    for i in range(len(x)):
        if sep[i] > 1e-2 or f.degree == 1:
            out.append((raw[i], np.ones(f.degree, dtype=int)))
            continue
        att = int(rot[i])
        if att not in rotations:
            rotations[att] = _binary_rotation(f.degree, settings, att)[0]
        u = rotations[att]
        clusters = cluster_roots(coeffs[i], chart[i], settings.cluster_radius)
        pts = canonicalize_rows(np.array([u @ np.array([c, 1.0]) for c, _ in clusters]))
        out.append((pts, np.array([m for _, m in clusters], dtype=int)))
    return out


def _group_rows(points, radius):
    n = len(points)
    dist = fs_distance_rows(points[:, None, :], points[None, :, :])
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if dist[i, j] <= radius:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _cluster_k2(f, x, settings):
    raw, extra = _raw_k2(f, x, settings)
    out = []
    for i in range(len(x)):
        pts = raw[i]
        dist = fs_distance_rows(pts[:, None, :], pts[None, :, :])
        np.fill_diagonal(dist, np.inf)
        if dist.min() > 1e-2:
            out.append((pts, np.ones(len(pts), dtype=int)))
            continue
        attempt, a, b, e1, e2 = extra[i]
        elim = _Elimination(f, settings, attempt)
        res_pts, res_m = [], []

        def accept(idx):
            ca, cb = a[idx].mean(), b[idx].mean()
            v = np.array([[ca, cb, 1.0]])
            jac = np.array([_grad(e1[None, :], v, f.degree)[0], _grad(e2[None, :], v, f.degree)[0]])
            sv = np.linalg.svd(jac, compute_uv=False)
            # derivative scale of the equations near (ca, cb)
            scale = f.degree * (np.abs(e1).sum() + np.abs(e2).sum()) * (1 + abs(ca) + abs(cb)) ** (f.degree - 1)
            # the midpoint of a fold is also singular, so require a near-solution too
            mono = _monos(v, f.degree)[0]
            resid = max(abs(mono @ e1), abs(mono @ e2))
            tight = scale * (settings.cluster_radius**2 + 100 * np.finfo(float).eps)
            return sv[-1] <= 1e-6 * scale and resid <= tight, (ca, cb)

        def visit(idx, r):
            if len(idx) == 1:
                res_pts.append(pts[idx[0]])
                res_m.append(1)
                return
            singular, (ca, cb) = accept(idx)
            spread = fs_distance_rows(pts[idx], pts[idx][:1]).max()
            if singular and spread <= max(r, settings.cluster_radius):
                y = elim.u @ np.array([ca, cb, 1.0])
                res_pts.append(y / np.linalg.norm(y))
                res_m.append(len(idx))
                return
            if r <= settings.cluster_radius:
                for j in idx:
                    res_pts.append(pts[j])
                    res_m.append(1)
                return
            for g in _group_rows(pts[idx], r / 10):
                visit([idx[j] for j in g], r / 10)

        for g in _group_rows(pts, 1e-2):
            visit(g, 1e-2)
        out.append((canonicalize_rows(np.array(res_pts)), np.array(res_m, dtype=int)))
    return out


def fiber_rows(f, x, settings=None):
    """Clustered fibers of each row of x: list of (points, multiplicities) in canonical order."""
    settings = settings or SolverSettings()
    x = canonicalize_rows(as_rows(x))
    groups = _cluster_k1(f, x, settings) if f.dim == 1 else _cluster_k2(f, x, settings)
    out = []
    for pts, mults in groups:
        order = canonical_order(pts)
        out.append((pts[order], mults[order]))
    return out


def _fiber_single(f, x, settings):
    settings = settings or SolverSettings()
    (pts, mults), = fiber_rows(f, x.coords, settings)
    resid = float(fs_distance_rows(evaluate_rows(f, pts), x.coords[None, :]).max())
    if resid > RESIDUAL_LIMIT:
        raise SolverFailure(f"fiber residual {resid:.3g} above {RESIDUAL_LIMIT}")
    return WeightedFiber(x, 1, pts, mults, resid)


def fiber_k1(f, x, settings=None):
    if f.dim != 1:
        raise ValueError("fiber_k1 needs a map of P^1")
    return _fiber_single(f, x, settings)


def fiber_k2(f, x, settings=None):
    if f.dim != 2:
        raise ValueError("fiber_k2 needs a map of P^2")
    return _fiber_single(f, x, settings)


def fiber(f, x, settings=None):
    return _fiber_single(f, x, settings)


def backward_tree(f, a, n, settings=None, levels=False):
    """f^{-n}(a) with multiplicities multiplied along branches.

    With ``levels=True`` returns the list of WeightedFibers for 0..n.
    """
    settings = settings or SolverSettings()
    if n < 0:
        raise ValueError("n must be >= 0")
    total = f.topological_degree**n
    if total > settings.max_tree_nodes:
        raise TreeTooLarge(f"d^(kn) = {total} exceeds max_tree_nodes = {settings.max_tree_nodes}")
    pts = a.coords[None, :]
    mults = np.ones(1, dtype=np.int64)
    out = [WeightedFiber(a, 0, pts, mults, 0.0)]
    step_resid = 0.0
    for level in range(1, n + 1):
        try:
            groups = fiber_rows(f, pts, settings)
        except SolverFailure as exc:
            raise SolverFailure(f"level {level}: {exc}", path=[level] + list(exc.path or [])) from exc
        new_pts = np.concatenate([g[0] for g in groups])
        new_m = np.concatenate([g[1] * m for g, m in zip(groups, mults)])
        parents = np.repeat(pts, [len(g[0]) for g in groups], axis=0)
        r = fs_distance_rows(evaluate_rows(f, new_pts), parents)
        step_resid = max(step_resid, float(r.max()))
        order = canonical_order(new_pts)
        pts, mults = new_pts[order], new_m[order]
        if levels or level == n:
            img = pts
            for _ in range(level):
                img = evaluate_rows(f, img)
            resid = float(fs_distance_rows(img, a.coords[None, :]).max())
            out.append(WeightedFiber(a, level, pts, mults, resid, {"step_residual": step_resid}))
        if int(mults.sum()) != f.topological_degree**level:
            raise SolverFailure(f"mass {int(mults.sum())} != d^(k*{level}) at level {level}", path=[level])
    return out if levels else out[-1]


def sample_inverse_branches(f, start, n, count, settings=None, rng_stream=0, previous=False):
    """``count`` endpoints of independent n-step backward walks from ``start``.

    Each step picks one of the d^k raw preimages uniformly, i.e. a fiber
    point with probability multiplicity / d^k.  Deterministic given
    (settings.rng_seed, rng_stream).  With ``previous=True`` also returns the
    walkers one step earlier, as (before_last, last).
    """
    settings = settings or SolverSettings()
    tags = rng_stream if isinstance(rng_stream, (tuple, list)) else (rng_stream,)
    rng = _rng(settings, 7, *tags)
    x = np.repeat(as_rows(start), count, axis=0) if as_rows(start).shape[0] == 1 else as_rows(start)
    x = canonicalize_rows(x)
    before = x
    for _ in range(n):
        before = x
        raw = raw_preimages(f, x, settings)
        choice = rng.integers(0, raw.shape[1], size=len(x))
        x = canonicalize_rows(raw[np.arange(len(x)), choice])
    return (before, x) if previous else x


def sample_inverse_branch(f, a, n, settings=None, rng_stream=0):
    if n < 1:
        raise ValueError("n must be >= 1")
    return ProjectivePoint(sample_inverse_branches(f, a, n, 1, settings, rng_stream)[0])
