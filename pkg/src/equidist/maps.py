"""Holomorphic endomorphisms of P^1 and P^2 given by homogeneous polynomial lifts.

A map of degree d on P^k is stored as a ``(k+1, M)`` complex coefficient
table over the monomials of degree d in k+1 variables.  Monomials are
enumerated by ``monomial_exponents``: for k = 1 the order is
z^d, z^{d-1}w, ..., w^d; for k = 2 it is lexicographic with decreasing
exponents of (z, w, t).
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import DegenerateImage, DegenerateMap, SolverFailure, ZeroVector
from .projective import ProjectivePoint, as_rows, canonicalize_rows, fs_distance_rows, random_points


@lru_cache(maxsize=None)
def monomial_exponents(k, d):
    if k == 1:
        rows = [(d - j, j) for j in range(d + 1)]
    elif k == 2:
        rows = [(a, b, d - a - b) for a in range(d, -1, -1) for b in range(d - a, -1, -1)]
    else:
        raise ValueError("only k = 1, 2 are supported")
    out = np.array(rows, dtype=int)
    out.setflags(write=False)
    return out


def _index_of(k, d):
    return {tuple(e): i for i, e in enumerate(monomial_exponents(k, d))}


def eval_monomials(v, d):
    """Matrix of monomials of degree d at the rows of v: (N, k+1) -> (N, M)."""
    v = np.asarray(v, dtype=complex)
    k = v.shape[1] - 1
    exps = monomial_exponents(k, d)
    powers = v[:, :, None] ** np.arange(d + 1)[None, None, :]
    out = np.ones((v.shape[0], len(exps)), dtype=complex)
    for i in range(k + 1):
        out *= powers[:, i, exps[:, i]]
    return out


def eval_forms(coeffs, v):
    """Evaluate forms with coefficient rows ``coeffs`` (C, M) at rows of v -> (N, C)."""
    coeffs = np.asarray(coeffs)
    k = np.asarray(v).shape[1] - 1
    d = int(monomial_exponents_degree(k, coeffs.shape[-1]))
    return eval_monomials(v, d) @ coeffs.T


@lru_cache(maxsize=None)
def _degree_from_count(k, m):
    for d in range(0, 64):
        if len(monomial_exponents(k, d)) == m:
            return d
    raise ValueError(f"no degree has {m} monomials in {k + 1} variables")


def monomial_exponents_degree(k, m):
    return _degree_from_count(k, m)


def jacobian(coeffs, v):
    """Complex Jacobian dF_c/dv_i at rows of v: (N, C, k+1)."""
    coeffs = np.asarray(coeffs)
    v = np.asarray(v, dtype=complex)
    k = v.shape[1] - 1
    d = monomial_exponents_degree(k, coeffs.shape[-1])
    exps = monomial_exponents(k, d)
    out = np.empty((v.shape[0], coeffs.shape[0], k + 1), dtype=complex)
    if d == 0:
        out[:] = 0
        return out
    low = eval_monomials(v, d - 1)
    index = _index_of(k, d - 1)
    for i in range(k + 1):
        dcoef = np.zeros((coeffs.shape[0], low.shape[1]), dtype=complex)
        for m, e in enumerate(exps):
            if e[i] > 0:
                e2 = list(e)
                e2[i] -= 1
                dcoef[:, index[tuple(e2)]] += coeffs[:, m] * e[i]
        out[:, :, i] = low @ dcoef.T
    return out


def _poly_product(k, a, da, b, db):
    """Product of forms given by coefficient vectors over monomial_exponents."""
    ea, eb = monomial_exponents(k, da), monomial_exponents(k, db)
    index = _index_of(k, da + db)
    out = np.zeros(len(index), dtype=complex)
    for i, x in enumerate(ea):
        if a[i] == 0:
            continue
        for j, y in enumerate(eb):
            if b[j] != 0:
                out[index[tuple(x + y)]] += a[i] * b[j]
    return out


def compose_linear(coeffs, matrix):
    """Coefficients of the forms y -> F_c(matrix @ y)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    matrix = np.asarray(matrix, dtype=complex)
    k = matrix.shape[0] - 1
    d = monomial_exponents_degree(k, coeffs.shape[-1])
    exps = monomial_exponents(k, d)
    # powers of the linear forms (matrix @ y)_i
    lin = [matrix[i] for i in range(k + 1)]  # coefficients over degree-1 monomials
    one = np.ones(1, dtype=complex)
    # monomials of degree 1 are ordered (z, w[, t]) so the row is the coefficient vector
    pows = []
    for i in range(k + 1):
        p = [one]
        for e in range(1, d + 1):
            p.append(_poly_product(k, p[-1], e - 1, lin[i], 1))
        pows.append(p)
    basis = []
    for e in exps:
        acc, deg = one, 0
        for i in range(k + 1):
            acc = _poly_product(k, acc, deg, pows[i][e[i]], e[i])
            deg += e[i]
        basis.append(acc)
    basis = np.array(basis)  # (M, M): monomial m of F maps to combination of monomials in y
    return coeffs @ basis


def binary_form_product(a, b):
    """Product of binary forms with coefficients ordered z^d, z^{d-1}w, ..., w^d."""
    return np.convolve(a, b)


@dataclass(frozen=True, eq=False)
class HomogeneousMap:
    """Endomorphism of P^k (k = 1, 2) of algebraic degree d >= 2.

    ``exceptional_points`` and ``exceptional_lines`` declare the maximal
    totally invariant set when it is known (lines are given by their normal
    vectors l, meaning {y : l . y = 0}).
    """

    dim: int
    degree: int
    components: np.ndarray
    label: str = "map"
    certified: bool = False
    exceptional_points: tuple = ()
    exceptional_lines: tuple = ()
    exceptional_declared: bool = False
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only P^1 and P^2 are supported")
        if self.degree < 2:
            raise ValueError(f"algebraic degree must be >= 2, got {self.degree}")
        comp = np.array(self.components, dtype=complex)
        m = len(monomial_exponents(self.dim, self.degree))
        if comp.shape != (self.dim + 1, m):
            raise ValueError(
                f"expected {self.dim + 1} components with {m} coefficients, got shape {comp.shape}"
            )
        if np.any(np.all(comp == 0, axis=1)):
            raise DegenerateMap("a component vanishes identically")
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)
        self._check_nondegenerate()

    def _check_nondegenerate(self):
        if self.dim == 1:
            res = binary_resultant(self.components[0], self.components[1])
            if not abs(res) > 1e-10:
                raise DegenerateMap(f"resultant {abs(res):.3g} vanishes: components share a root")
            return
        if not self.certified:
            raise DegenerateMap("maps of P^2 need a declared nondegeneracy certificate")
        rng = np.random.default_rng(12345)
        x = random_points(2, 100, rng)
        vals = np.linalg.norm(eval_forms(self.components, x), axis=1)
        if not np.all(vals > 1e-10):
            raise DegenerateMap("lift vanishes at a sampled point")

    @property
    def topological_degree(self):
        return self.degree**self.dim

    def lift(self, v):
        return eval_forms(self.components, as_rows(v))

    def __call__(self, x):
        return evaluate(self, x)

    def to_json(self):
        return {
            "dim": self.dim,
            "degree": self.degree,
            "components": [[[float(c.real), float(c.imag)] for c in row] for row in self.components],
            "label": self.label,
        }


def binary_resultant(p, q):
    """Resultant of two binary forms of equal degree after scaling to unit max coefficient."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    p = p / np.abs(p).max()
    q = q / np.abs(q).max()
    d = len(p) - 1
    s = np.zeros((2 * d, 2 * d), dtype=complex)
    for i in range(d):
        s[i, i : i + d + 1] = p
        s[d + i, i : i + d + 1] = q
    return np.linalg.det(s)


def from_binary_forms(p, q, label="map", **kw):
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    return HomogeneousMap(1, len(p) - 1, np.array([p, q]), label=label, **kw)


def from_json(data):
    comps = [[complex(re, im) for re, im in row] for row in data["components"]]
    return HomogeneousMap(
        int(data["dim"]),
        int(data["degree"]),
        np.array(comps),
        label=data.get("label", "inline"),
        certified=bool(data.get("certified", False)),
    )


# -- evaluation -------------------------------------------------------------


def evaluate_rows(f, v):
    """Canonical images of the rows of v."""
    w = f.lift(v)
    norms = np.linalg.norm(w, axis=1)
    if np.any(~(norms >= 1e-300)):
        raise DegenerateImage("lift vanished: the map is degenerate at an input point")
    return canonicalize_rows(w)


def evaluate(f, x):
    if isinstance(x, ProjectivePoint):
        return ProjectivePoint(evaluate_rows(f, x.coords[None, :])[0])
    return evaluate_rows(f, x)


def iterate_rows(f, v, n):
    v = canonicalize_rows(np.atleast_2d(v))
    for _ in range(n):
        v = evaluate_rows(f, v)
    return v


@dataclass(frozen=True)
class MapIterate:
    """f^n, evaluated by repeated application (never expanded)."""

    base: HomogeneousMap
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("iterate order must be >= 0")

    @property
    def degree(self):
        return self.base.degree**self.n

    def __call__(self, x):
        if isinstance(x, ProjectivePoint):
            return ProjectivePoint(iterate_rows(self.base, x.coords, self.n)[0])
        return iterate_rows(self.base, x, self.n)


def evaluate_lift_norm_log(f, v, n):
    """d^{-n} log|F^n(v)| with the max norm, renormalizing at every step.

    Accepts a single vector or an (N, k+1) array.  With v_0 = v/|v| and
    v_j = F(v_{j-1})/|F(v_{j-1})| the value is
    log|v| + sum_{j=1..n} d^{-j} log|F(v_{j-1})|.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    arr = np.asarray(v, dtype=complex)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    norms = np.abs(arr).max(axis=1)
    if np.any(~(norms >= 1e-300)):
        raise ZeroVector("lift norm of the zero vector")
    acc = np.log(norms)
    u = arr / norms[:, None]
    scale = 1.0
    for _ in range(n):
        scale /= f.degree
        w = eval_forms(f.components, u)
        m = np.abs(w).max(axis=1)
        acc = acc + scale * np.log(m)
        u = w / m[:, None]
    return float(acc[0]) if single else acc


# -- derivative bounds --------------------------------------------------------


def spherical_derivative_rows(f, v, smallest=False):
    """Operator norm of df at the rows of v w.r.t. the Fubini-Study metric.

    With ``smallest=True`` the smallest singular value instead.
    """
    v = canonicalize_rows(np.atleast_2d(v))
    k = f.dim
    w = f.lift(v)
    nw = np.linalg.norm(w, axis=1)
    what = w / nw[:, None]
    jac = jacobian(f.components, v)
    out = np.empty(len(v))
    for i in range(len(v)):
        # orthonormal basis of the tangent space v^perp
        q, _ = np.linalg.qr(np.column_stack([v[i], np.eye(k + 1)[:, :k]]))
        basis = q[:, 1:]
        proj = np.eye(k + 1) - np.outer(what[i], what[i].conj())
        out[i] = np.linalg.norm(proj @ jac[i] @ basis, -2 if smallest else 2) / nw[i]
    return out


def spherical_derivative_sup(f, samples=2000, seed=0):
    """Estimate of the Lipschitz constant of f for the chordal metric (>= 1).

    Combines the maximal derivative norm over random points, refined by local
    maximization, with difference quotients of point pairs at scale 1e-5.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    rng = np.random.default_rng(seed)
    x = random_points(f.dim, samples, rng)
    vals = spherical_derivative_rows(f, x)
    best = float(vals.max())
    k = f.dim
    for i in np.argsort(vals)[-5:]:
        # chart centred at the sample after a unitary change taking it to e_0
        q, _ = np.linalg.qr(np.column_stack([x[i], np.eye(k + 1)[:, :k]]))
        base = np.zeros(k + 1, dtype=complex)
        base[0] = 1.0

        def obj(params):
            z = params[:k] + 1j * params[k:]
            p = base.copy()
            p[1:] = z
            return -spherical_derivative_rows(f, (q @ p)[None, :])[0]

        res = optimize.minimize(obj, np.zeros(2 * k), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400})
        best = max(best, -float(res.fun))
    # finite pairs at scale 1e-5 as a cross-check of the infinitesimal value
    h = 1e-5
    dirs = rng.standard_normal((samples, k + 1)) + 1j * rng.standard_normal((samples, k + 1))
    y = canonicalize_rows(x + h * dirs / np.linalg.norm(dirs, axis=1, keepdims=True))
    ratio = fs_distance_rows(evaluate_rows(f, x), evaluate_rows(f, y)) / fs_distance_rows(x, y)
    best = max(best, float(np.max(ratio)))
    return max(best, 1.0)


# -- critical points ------------------------------------------------------------


def wronskian_k1(f):
    """Binary form P_z Q_w - P_w Q_z of degree 2d - 2."""
    d = f.degree
    p, q = f.components
    j = np.arange(d + 1)
    # coefficient j multiplies z^{d-j} w^j
    pz = (p * (d - j))[:-1]
    qz = (q * (d - j))[:-1]
    pw = (p * j)[1:]
    qw = (q * j)[1:]
    return binary_form_product(pz, qw) - binary_form_product(pw, qz)


def critical_points_k1(f, settings=None):
    """Critical points of a map of P^1 with multiplicities summing to 2d - 2."""
    from .fibers import SolverSettings, binary_form_roots

    if f.dim != 1:
        raise ValueError("critical_points_k1 needs k = 1")
    settings = settings or SolverSettings()
    w = wronskian_k1(f)
    pts, mults, residual = binary_form_roots(w, settings)
    if residual > 1e-10:
        raise SolverFailure(f"critical point residual {residual:.3g} above 1e-10")
    return [(ProjectivePoint(p), int(m)) for p, m in zip(pts, mults)]


# -- presets ------------------------------------------------------------------------

_INF = np.array([1.0, 0.0])
_ZERO = np.array([0.0, 1.0])


def _preset_table():
    e1, e2, e3 = np.eye(3)
    return {
        "z2": dict(dim=1, forms=([1, 0, 0], [0, 0, 1]), pts=(_ZERO, _INF)),
        "z3": dict(dim=1, forms=([1, 0, 0, 0], [0, 0, 0, 1]), pts=(_ZERO, _INF)),
        "basilica": dict(dim=1, forms=([1, 0, -1], [0, 0, 1]), pts=(_INF,)),
        "cheb": dict(dim=1, forms=([1, 0, -2], [0, 0, 1]), pts=(_INF,)),
        # (z^2 - w^2)/(z^2 + w^2): critical values -1, 1 are not critical, so E is empty
        "rat2": dict(dim=1, forms=([1, 0, -1], [1, 0, 1]), pts=()),
        "torus2": dict(dim=2, forms=None, pts=(), lines=(e1, e2, e3)),
    }


PRESETS = ("z2", "z3", "basilica", "cheb", "rat2", "torus2")


def preset(name):
    """Named example maps.  Every preset carries its declared exceptional set."""
    table = _preset_table()
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    spec = table[name]
    if spec["dim"] == 1:
        p, q = spec["forms"]
        return from_binary_forms(
            p, q, label=name,
            exceptional_points=tuple(np.asarray(x, dtype=complex) for x in spec["pts"]),
            exceptional_declared=True,
        )
    exps = monomial_exponents(2, 2)
    index = _index_of(2, 2)
    comps = np.zeros((3, len(exps)), dtype=complex)
    for i in range(3):
        e = [0, 0, 0]
        e[i] = 2
        comps[i, index[tuple(e)]] = 1.0
    return HomogeneousMap(
        2, 2, comps, label=name, certified=True,
        exceptional_lines=tuple(np.asarray(l, dtype=complex) for l in spec["lines"]),
        exceptional_declared=True,
    )
