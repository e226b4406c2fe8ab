"""Observables on P^k with measured regularity data, and regularization by
averaging over automorphisms close to the identity.

Derivatives are taken along Fubini-Study geodesics s -> cos(s) x + sin(s) v
(v a unit tangent vector), for which the chordal distance is sin(s).  So
``grad_sup`` is a Lipschitz constant for ``fs_distance``.  The C^2 proxy
``c2_norm`` is measured in the round metric of the sphere (arc length 2s),
where the sphere coordinates X, Y, Z have norm one.
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import NotC1
from .projective import ProjectivePoint, as_rows, canonicalize_rows, fs_distance_rows, random_points

SAFETY = 1.5
PROBE_POINTS = 20000
STEP = 1e-4


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A real observable on P^k with regularity data.

    ``holder_alpha`` is 2 for smooth members.  ``grad_sup`` is None for rough
    members.  ``sup_norm``, ``grad_sup`` and ``holder_norm`` are measured by
    dense sampling and multiplied by a 1.5 safety factor; ``c2_norm`` is the
    plain measured value.
    """

    __test__ = False  # not a pytest class

    label: str
    func: Callable
    dim: int
    holder_alpha: float
    holder_norm: float
    grad_sup: Optional[float]
    sup_norm: float
    c2_norm: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x):
        if isinstance(x, ProjectivePoint):
            return float(self.func(x.coords[None, :])[0])
        return np.asarray(self.func(as_rows(x)), dtype=float)

    def eval(self, x):
        return self(x)

    def scaled(self, c, label=None):
        c = float(c)
        func = self.func
        return replace(
            self,
            label=label or f"{c:g}*{self.label}",
            func=lambda v: c * func(v),
            holder_norm=abs(c) * self.holder_norm,
            grad_sup=None if self.grad_sup is None else abs(c) * self.grad_sup,
            sup_norm=abs(c) * self.sup_norm,
            c2_norm=None if self.c2_norm is None else abs(c) * self.c2_norm,
        )

    def shifted(self, c, label=None):
        """phi + c (regularity constants only change through the sup norm)."""
        c = float(c)
        func = self.func
        sup = self.sup_norm + abs(c)
        return replace(
            self,
            label=label or f"{self.label}{c:+g}",
            func=lambda v: func(v) + c,
            sup_norm=sup,
            holder_norm=max(self.holder_norm, sup),
            c2_norm=None if self.c2_norm is None else max(self.c2_norm, self.sup_norm / SAFETY + abs(c)),
        )

    def normalized(self):
        """phi / c2_norm, so that the C^2 proxy norm is one."""
        if self.c2_norm is None:
            raise NotC1(f"{self.label} has no C^2 proxy norm")
        return self.scaled(1.0 / self.c2_norm, label=f"{self.label}/c2")


def linear_combination(terms, label=None):
    """sum of a_i * phi_i for terms [(a_i, phi_i)], with subadditive constants."""
    terms = [(float(a), fn) for a, fn in terms]
    dim = terms[0][1].dim
    funcs = [(a, fn.func) for a, fn in terms]

    def func(v):
        return sum(a * g(v) for a, g in funcs)

    smooth = all(fn.grad_sup is not None for _, fn in terms)
    return TestFunction(
        label or "+".join(f"{a:g}*{fn.label}" for a, fn in terms),
        func,
        dim,
        min(fn.holder_alpha for _, fn in terms),
        sum(abs(a) * fn.holder_norm for a, fn in terms),
        sum(abs(a) * fn.grad_sup for a, fn in terms) if smooth else None,
        sum(abs(a) * fn.sup_norm for a, fn in terms),
        sum(abs(a) * fn.c2_norm for a, fn in terms) if all(fn.c2_norm is not None for _, fn in terms) else None,
    )


# -- measurement ---------------------------------------------------------------


def tangent_basis(x):
    """Real orthonormal basis of the tangent space at each unit row: (N, 2k, k+1)."""
    n, m = x.shape
    stack = np.empty((n, m, m), dtype=complex)
    stack[:, :, 0] = x
    stack[:, :, 1:] = np.eye(m)[None, :, : m - 1]
    # guard against x parallel to the auxiliary columns
    stack[:, :, 1:] += 1e-3 * np.arange(1, m)[None, None, :] * np.roll(np.eye(m), 1, axis=0)[None, :, : m - 1]
    q = np.linalg.qr(stack)[0]
    tang = np.swapaxes(q[:, :, 1:], 1, 2)
    out = np.empty((n, 2 * (m - 1), m), dtype=complex)
    out[:, 0::2] = tang
    out[:, 1::2] = 1j * tang
    return out


def geodesic(x, v, s):
    s = np.asarray(s, dtype=float)
    if s.ndim:
        s = s[:, None]
    return np.cos(s) * x + np.sin(s) * v


def _gradient_norms(func, x, basis, h):
    grads = []
    for j in range(basis.shape[1]):
        v = basis[:, j]
        grads.append((func(geodesic(x, v, h)) - func(geodesic(x, v, -h))) / (2 * h))
    return np.sqrt(np.sum(np.square(grads), axis=0))


def _second_derivatives(func, x, basis, h, rng):
    # second derivative along random unit tangent directions
    coef = rng.standard_normal((len(x), basis.shape[1]))
    coef /= np.linalg.norm(coef, axis=1, keepdims=True)
    v = np.einsum("nj,njc->nc", coef, basis)
    f0 = func(x)
    return np.abs(func(geodesic(x, v, h)) - 2 * f0 + func(geodesic(x, v, -h))) / h**2


def measure_constants(func, dim, alpha=2.0, samples=PROBE_POINTS, seed=0, h=STEP):
    """Measured sup |phi|, gradient sup, second-derivative sup and Hoelder constant."""
    rng = np.random.default_rng(seed)
    x = random_points(dim, samples, rng)
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    sup = float(np.abs(func(x)).max())
    out = {"sup": sup}
    if alpha >= 1:
        basis = tangent_basis(x[: samples // 4])
        out["grad"] = float(_gradient_norms(func, x[: samples // 4], basis, h).max())
        out["hess"] = float(_second_derivatives(func, x[: samples // 4], basis, 10 * h, rng).max())
    else:
        # difference quotients at log-uniform scales
        basis = tangent_basis(x)
        coef = rng.standard_normal((samples, basis.shape[1]))
        coef /= np.linalg.norm(coef, axis=1, keepdims=True)
        v = np.einsum("nj,njc->nc", coef, basis)
        s = 10 ** rng.uniform(-8, 0, samples)
        y = geodesic(x, v, s)
        dist = fs_distance_rows(x, y)
        out["holder"] = float((np.abs(func(x) - func(y)) / dist**alpha).max())
    return out


def make_test_function(label, func, dim, alpha=2.0, seed=0, samples=PROBE_POINTS):
    """TestFunction with regularity data measured by dense sampling."""
    m = measure_constants(func, dim, alpha, samples, seed)
    sup = SAFETY * m["sup"]
    if alpha >= 1:
        grad = SAFETY * m["grad"]
        c2 = max(m["sup"], m["grad"] / 2, m["hess"] / 4)
        holder = max(sup, grad, SAFETY * m["hess"])
        return TestFunction(label, func, dim, float(alpha), holder, grad, sup, c2, {"measured": m})
    holder = max(sup, SAFETY * m["holder"])
    return TestFunction(label, func, dim, float(alpha), holder, None, sup, None, {"measured": m})


# -- the builtin family ------------------------------------------------------------


def _norm2(v):
    return np.sum(np.abs(v) ** 2, axis=-1)


def sphere_x(v):
    return 2 * (v[:, 0] * v[:, 1].conj()).real / _norm2(v)


def sphere_y(v):
    return 2 * (v[:, 0] * v[:, 1].conj()).imag / _norm2(v)


def sphere_z(v):
    return (np.abs(v[:, 1]) ** 2 - np.abs(v[:, 0]) ** 2) / _norm2(v)


def _cross_term(i, j, part):
    def func(v):
        c = v[:, i] * v[:, j].conj() / _norm2(v)
        return c.real if part == "re" else c.imag

    return func


def _radial(i, j):
    def func(v):
        return (np.abs(v[:, i]) ** 2 - np.abs(v[:, j]) ** 2) / _norm2(v)

    return func


def _k1_members():
    return [
        ("X", sphere_x, 2.0),
        ("Y", sphere_y, 2.0),
        ("Z", sphere_z, 2.0),
        ("XY", lambda v: sphere_x(v) * sphere_y(v), 2.0),
        ("XZ", lambda v: sphere_x(v) * sphere_z(v), 2.0),
        ("sqrt_abs_X", lambda v: np.sqrt(np.abs(sphere_x(v))), 0.5),
    ]


def _k2_members():
    names = "zwt"
    out = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        for part in ("re", "im"):
            out.append((f"{part}_{names[i]}{names[j]}", _cross_term(i, j, part), 2.0))
    out.append(("rad_zt", _radial(0, 2), 2.0))
    out.append(("rad_wt", _radial(1, 2), 2.0))
    rough = _cross_term(0, 1, "re")
    out.append(("sqrt_abs_re_zw", lambda v: np.sqrt(np.abs(2 * rough(v))), 0.5))
    return out


@lru_cache(maxsize=None)
def _suite(k):
    members = _k1_members() if k == 1 else _k2_members()
    return tuple(make_test_function(label, func, k, alpha, seed=i) for i, (label, func, alpha) in enumerate(members))


def builtin_suite(k):
    """The finite witness family of observables on P^k (k = 1, 2)."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    return list(_suite(k))


def builtin(label, k=None):
    for kk in ((k,) if k else (1, 2)):
        for fn in _suite(kk):
            if fn.label == label:
                return fn
    raise KeyError(f"unknown observable {label!r}")


def constant(value, k):
    value = float(value)
    return TestFunction(f"const{value:g}", lambda v: np.full(len(v), value), k, 2.0, abs(value), 0.0, abs(value), abs(value))


# -- regularization ------------------------------------------------------------------


def _bump_samples(rng, size):
    """iid draws from the density proportional to exp(-1 / (1 - s^2)) on (-1, 1)."""
    out = np.empty(size)
    filled = 0
    while filled < size:
        s = rng.uniform(-1, 1, 2 * (size - filled) + 16)
        with np.errstate(divide="ignore"):
            accept = rng.uniform(size=s.size) < np.exp(1.0 - 1.0 / (1.0 - s * s))
        s = s[accept][: size - filled]
        out[filled : filled + s.size] = s
        filled += s.size
    return out


@lru_cache(maxsize=None)
def _draws(dim, theta, num, seed):
    rng = np.random.default_rng([seed, 21, dim, num])
    m = dim + 1
    shape = (num, m, m)
    v = (_bump_samples(rng, num * m * m) + 1j * _bump_samples(rng, num * m * m)).reshape(shape)
    # Frobenius norm of v is at most 1, so |U| <= theta
    v /= np.sqrt(2) * m
    mats = np.eye(m)[None] + theta * v
    mats.setflags(write=False)
    return mats


@lru_cache(maxsize=None)
def _eta(dim, theta, num, seed):
    mats = _draws(dim, theta, num, seed)
    x = random_points(dim, 2000, np.random.default_rng([seed, 22]))
    worst = 0.0
    for a in mats:
        worst = max(worst, float(fs_distance_rows(x @ a.T, x).max()))
    return worst / theta


@dataclass(frozen=True)
class RegularizationScheme:
    """Averaging over x -> (I + U) x with U = theta V and V drawn from a fixed bump density."""

    theta: float
    dim: int
    num_group_samples: int = 100
    seed: int = 0
    perturbation_rule: str = (
        "x -> canonicalize((I + U) x); U = theta * V, Re V and Im V entrywise iid "
        "with density ~ exp(-1/(1-s^2)) on (-1, 1), divided by sqrt(2)(k+1)"
    )

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.num_group_samples < 100:
            raise ValueError("num_group_samples must be >= 100")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    @property
    def matrices(self):
        return _draws(self.dim, self.theta, self.num_group_samples, self.seed)

    @property
    def displacement_factor_eta(self):
        """Measured sup of fs(tau_u(x), x) / theta (cached per scheme)."""
        return _eta(self.dim, self.theta, self.num_group_samples, self.seed)


def _average(func, mats, v, chunk=4096):
    out = np.empty(len(v))
    for lo in range(0, len(v), chunk):
        blk = v[lo : lo + chunk]
        imgs = np.einsum("uij,nj->uni", mats, blk).reshape(-1, blk.shape[1])
        out[lo : lo + chunk] = func(canonicalize_rows(imgs)).reshape(len(mats), -1).mean(axis=0)
    return out


def regularize(fn, scheme, rng=None, probe_points=2000):
    """phi_theta(x): the average of phi over the scheme's frozen automorphisms.

    The draws are finite, so phi_theta only smooths phi at scales comparable
    to theta; its gradient data are measured by difference quotients at
    scale theta / 10.  ``rng`` is accepted for interface symmetry; the
    draws are those frozen in ``scheme``.
    """
    if scheme.dim != fn.dim:
        raise ValueError("scheme and observable live on different spaces")
    mats = scheme.matrices
    base = fn.func

    def func(v):
        return _average(base, mats, np.asarray(v, dtype=complex))

    theta = scheme.theta
    h = theta / 10
    rng = np.random.default_rng([scheme.seed, 23])
    x = random_points(fn.dim, probe_points, rng)
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    basis = tangent_basis(x)
    grad = float(_gradient_norms(func, x, basis, h).max())
    hess = float(_second_derivatives(func, x, basis, h, rng).max())
    sup = min(fn.sup_norm, SAFETY * float(np.abs(func(x)).max()))
    lip = ((1 + theta) / (1 - theta)) ** min(fn.holder_alpha, 1.0)
    c2 = max(sup / SAFETY, grad / 2, hess / 4)
    return TestFunction(
        f"{fn.label}@theta={theta:g}",
        func,
        fn.dim,
        fn.holder_alpha,
        fn.holder_norm * lip,
        SAFETY * grad,
        sup,
        c2,
        {"theta": theta, "source": fn.label, "eta": scheme.displacement_factor_eta},
    )


def recentred(fn, mu_hat):
    """phi - <mu_hat, phi>, which pairs to zero with mu_hat."""
    c = mu_hat.pair(fn)
    return fn.shifted(-c, label=f"{fn.label}-mean")


# -- sup norm against log of the gradient -------------------------------------------------


@dataclass(frozen=True)
class SupGradientCheck:
    sup_norm: float
    bound: float
    a0: float
    violated: bool


def _measured_sup(fn, samples=4000, seed=31):
    x = random_points(fn.dim, samples, np.random.default_rng(seed))
    return float(np.abs(fn(x)).max())


@lru_cache(maxsize=None)
def fitted_a0(k):
    """A0 fitted once over the normalized smooth members of the builtin suite."""
    ratios = []
    for fn in _suite(k):
        if fn.grad_sup is None:
            continue
        g = fn.normalized()
        ratios.append(_measured_sup(g) / (1 + max(0.0, math.log(g.grad_sup))))
    return max(ratios)


def sup_vs_log_gradient_check(fn, a0=None):
    """(sup |phi|, A0 (1 + log+ grad_sup)) for a C^1 observable normalized to c2_norm <= 1."""
    if fn.grad_sup is None:
        raise NotC1(f"{fn.label} has no gradient bound")
    if fn.c2_norm is None or fn.c2_norm > 1 + 1e-9:
        raise ValueError(f"{fn.label} must be normalized to c2_norm <= 1 (got {fn.c2_norm})")
    a0 = fitted_a0(fn.dim) if a0 is None else a0
    sup = _measured_sup(fn)
    bound = a0 * (1 + max(0.0, math.log(fn.grad_sup)))
    return SupGradientCheck(sup, bound, a0, sup > bound * 1.01)
