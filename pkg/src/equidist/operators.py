"""The pushforward f_* on functions, Lambda = d^(1-k) f_*, and a telescoping
diagnostic that alternates Lambda with regularization."""

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ScheduleUnderflow
from .fibers import SolverSettings, raw_preimages
from .observables import RegularizationScheme, TestFunction, make_test_function, regularize

MEMO_GRANULARITY = 1e-10


@dataclass(frozen=True, eq=False)
class PushforwardFunction:
    """x -> scale * sum of base_fn over f^{-order}(x), with multiplicity.

    Values at single points are memoized on canonical coordinates rounded to
    1e-10.  Regularity data are bounds on sup norms only: ``grad_sup`` is
    None because f_* phi is merely Hoelder near critical values.
    """

    base_fn: object
    map: object
    order: int = 1
    solver: SolverSettings = field(default_factory=SolverSettings)
    scale: float = 1.0
    label: str = ""
    _memo: dict = field(default_factory=dict, repr=False)
    _lock: object = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.label:
            name = "Lambda" if self.scale != 1.0 else "f_*"
            power = "" if self.order == 1 else f"^{self.order}"
            object.__setattr__(self, "label", f"{name}{power}({self.base_fn.label})")

    @property
    def dim(self):
        return self.map.dim

    @property
    def mass(self):
        return self.map.topological_degree**self.order

    @property
    def sup_norm(self):
        return abs(self.scale) * self.mass * self.base_fn.sup_norm

    @property
    def holder_alpha(self):
        # local multiplicities are at most d^(k n)
        return min(self.base_fn.holder_alpha, 1.0) / self.mass

    @property
    def holder_norm(self):
        return abs(self.scale) * self.mass * max(self.base_fn.holder_norm, self.base_fn.sup_norm)

    grad_sup = None
    c2_norm = None

    def _compute(self, rows):
        n_rows = len(rows)
        pts = rows
        for _ in range(self.order):
            pts = raw_preimages(self.map, pts, self.solver).reshape(-1, rows.shape[1])
        vals = np.asarray(self.base_fn.func(pts), dtype=float)
        return self.scale * vals.reshape(n_rows, -1).sum(axis=1)

    def func(self, rows):
        from .projective import as_rows, canonicalize_rows

        rows = canonicalize_rows(as_rows(rows))
        if len(rows) > 64:
            return self._compute(rows)
        keys = [np.round(r.view(float) / MEMO_GRANULARITY).astype(np.int64).tobytes() for r in rows]
        missing = [i for i, key in enumerate(keys) if key not in self._memo]
        if missing:
            vals = self._compute(rows[missing])
            with self._lock:
                for i, v in zip(missing, vals):
                    self._memo.setdefault(keys[i], float(v))
        return np.array([self._memo[key] for key in keys])

    def __call__(self, x):
        from .projective import ProjectivePoint

        if isinstance(x, ProjectivePoint):
            return float(self.func(x.coords[None, :])[0])
        return self.func(x)

    def eval(self, x):
        return self(x)


def pushforward(fn, f, settings=None, order=1):
    """f_* phi (applied ``order`` times), evaluated lazily from fibers."""
    if fn.dim != f.dim:
        raise ValueError("observable and map live on different spaces")
    return PushforwardFunction(fn, f, order, settings or SolverSettings())


def lambda_op(fn, f, settings=None, order=1):
    """Lambda phi = d^(1-k) f_* phi."""
    if fn.dim != f.dim:
        raise ValueError("observable and map live on different spaces")
    scale = float(f.degree ** ((1 - f.dim) * order))
    return PushforwardFunction(fn, f, order, settings or SolverSettings(), scale)


# -- telescoping diagnostic -----------------------------------------------------------


def _sphere_grid(n_polar, n_lon):
    polar = np.linspace(0.0, np.pi, n_polar + 1)
    lon = np.linspace(0.0, 2 * np.pi, n_lon + 1)
    p, q = np.meshgrid(polar, lon, indexing="ij")
    rows = np.stack([np.sin(p / 2) * np.exp(1j * q), np.cos(p / 2) + 0j], axis=-1).reshape(-1, 2)
    return polar, lon, rows


def _sphere_angles(rows):
    r = np.abs(rows)
    polar = 2 * np.arctan2(r[:, 0], r[:, 1])
    lon = np.mod(np.angle(rows[:, 0] * rows[:, 1].conj()), 2 * np.pi)
    return np.stack([polar, lon], axis=1)


def tabulated_function(label, table, polar, lon, smoothness=2.0):
    """Bilinear interpolation of values on a latitude-longitude grid of P^1."""
    interp = RegularGridInterpolator((polar, lon), table, method="linear", bounds_error=False, fill_value=None)

    def func(v):
        return interp(_sphere_angles(np.asarray(v, dtype=complex)))

    return make_test_function(label, func, 1, smoothness, samples=4000)


@dataclass(frozen=True, eq=False)
class TelescopeState:
    level: int
    phi_i: TestFunction
    c_i: float
    psi_sup_off_tube: float
    theta_i: float
    schedule_params: tuple
    phi_sup: float

    def to_json(self):
        m, delta, l_value, n = self.schedule_params
        return {
            "level": self.level,
            "c_i": self.c_i,
            "psi_sup_off_tube": self.psi_sup_off_tube,
            "theta_i": self.theta_i,
            "phi_sup": self.phi_sup,
            "schedule": {"M": m, "delta": delta, "l": l_value, "n": n},
        }


def telescope_run(phi0, f, a, n, m, delta, settings=None, mu_hat=None, tube=0.1, grid=(64, 128), group_samples=100,
                  pairing_atoms=2000):
    """Iterate Lambda(phi_{i-1}) = c_i + phi_i + psi_i for i = 1..n (maps of P^1).

    c_i + phi_i is the theta_i-regularization of Lambda(phi_{i-1}) with
    theta_i = exp(-M l delta^i n), and c_i = -<mu_hat, psi_i>.  Every phi_i
    is tabulated on a latitude-longitude grid, and c_i uses the first
    ``pairing_atoms`` atoms of mu_hat.  Diagnostic only.
    """
    from .exceptional import declared_model
    from .measures import estimate_mu
    from .projective import ProjectivePoint

    settings = settings or SolverSettings()
    if f.dim != 1:
        raise ValueError("telescope_run is implemented for maps of P^1")
    if not 1 < delta < f.degree:
        raise ValueError("delta must lie in (1, d)")
    a = a if isinstance(a, ProjectivePoint) else ProjectivePoint(a)
    model = declared_model(f, settings)
    dist = 1.0 if model is None or model.is_empty else float(model.distance(a))
    l_value = 1.0 + max(0.0, math.log(1.0 / dist)) if dist > 0 else math.inf
    if mu_hat is None:
        mu_hat = estimate_mu(f, settings, samples=pairing_atoms, start=ProjectivePoint([0.31 + 0.17j, 1.0]))
    polar, lon, rows = _sphere_grid(*grid)
    shape = (len(polar), len(lon))
    off_tube = np.ones(len(rows), bool) if model is None or model.is_empty else model.distance_rows(rows) > tube
    atoms = mu_hat.measure.points[:pairing_atoms]
    current = phi0
    mean0 = mu_hat.pair(phi0)
    if mean0 != 0.0:
        current = phi0.shifted(-mean0)
    states = []
    for i in range(1, n + 1):
        theta = math.exp(-m * l_value * delta**i * n)
        if theta < 1e-300:
            raise ScheduleUnderflow(f"theta_{i} = {theta:.3g} < 1e-300", states)
        lam = lambda_op(current, f, settings)
        reg = regularize(_raw(lam), RegularizationScheme(theta, 1, group_samples, settings.rng_seed), probe_points=16)
        g_vals = lam.func(rows)
        reg_vals = reg.func(rows)
        psi_vals = g_vals - reg_vals
        psi_mu = float(np.mean(lam.func(atoms) - reg.func(atoms)))
        c_i = -psi_mu
        phi_vals = reg_vals - c_i
        current = tabulated_function(f"phi_{i}", phi_vals.reshape(shape), polar, lon)
        psi_sup = float(np.abs(psi_vals[off_tube]).max()) if off_tube.any() else 0.0
        states.append(
            TelescopeState(i, current, c_i, psi_sup, theta, (m, delta, l_value, n), float(np.abs(phi_vals).max()))
        )
    return states


def _raw(fn):
    """A TestFunction view of a lazily evaluated observable (sup data only)."""
    return TestFunction(fn.label, fn.func, fn.dim, fn.holder_alpha, fn.holder_norm, None, fn.sup_norm)



def invariance_checks(f, mu_hat, suite=None, settings=None, tolerance=5.0):
    """Forward and pullback invariance of mu_hat on a family of observables.

    For each phi: <mu_hat, phi o f> - <mu_hat, phi> and
    d^-k <mu_hat, f_* phi> - <mu_hat, phi>, against ``tolerance`` error bars.
    A gap's error bar combines the batch-means error of the per-atom gaps
    with the error bar of <mu_hat, phi>.
    """
    from .maps import evaluate_rows
    from .measures import batch_means
    from .observables import builtin_suite

    settings = settings or SolverSettings()
    suite = builtin_suite(f.dim) if suite is None else suite
    atoms = mu_hat.measure.points
    images = evaluate_rows(f, atoms)
    pre = raw_preimages(f, atoms, settings).reshape(-1, atoms.shape[1])
    out = {}
    k = len(atoms)
    for fn in suite:
        mean, err = mu_hat.pair_with_stderr(fn)
        here = fn.func(atoms)
        fwd_vals = fn.func(images) - here
        pull_vals = fn.func(pre).reshape(k, -1).mean(axis=1) - here
        # error bar of a gap: its own batch-means error combined with that of <mu_hat, phi>
        fwd_err = float(np.hypot(batch_means(fwd_vals)[1], err))
        pull_err = float(np.hypot(batch_means(pull_vals)[1], err))
        forward, pull = float(fwd_vals.mean()), float(pull_vals.mean())
        out[fn.label] = {
            "mean": mean,
            "stderr": err,
            "forward_gap": forward,
            "forward_stderr": fwd_err,
            "pullback_gap": pull,
            "pullback_stderr": pull_err,
            "ok": abs(forward) <= tolerance * fwd_err and abs(pull) <= tolerance * pull_err,
        }
    return out
