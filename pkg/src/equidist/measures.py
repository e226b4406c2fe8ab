"""Discrete probability measures on P^k: fiber measures, Monte Carlo estimates
of the equilibrium measure, and pairings with observables.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ExceptionalStart, GridOverflow
from .fibers import SolverSettings, backward_tree, sample_inverse_branches
from .maps import evaluate_lift_norm_log
from .projective import ProjectivePoint, as_rows, canonicalize_rows

NUM_BATCHES = 16
CHUNK = 1 << 14


def _values(fn, rows):
    """Values of an observable at rows; accepts TestFunction or any callable on rows."""
    return np.asarray(fn(rows))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely many weighted atoms; weights are positive and sum to one."""

    points: np.ndarray
    weights: np.ndarray
    provenance: str = "external"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = canonicalize_rows(as_rows(self.points))
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(w) != len(pts):
            raise ValueError(f"{len(pts)} atoms but {len(w)} weights")
        if np.any(~(w > 0)):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        if self.provenance not in ("fiber", "inverse_iteration_mc", "external", "grid"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, point):
        return cls(as_rows(point), np.ones(1), "external")

    @classmethod
    def uniform(cls, points, provenance="external"):
        pts = as_rows(points)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)), provenance)

    @property
    def dim(self):
        return self.points.shape[1] - 1

    @property
    def atoms(self):
        return [(ProjectivePoint(p), float(w)) for p, w in zip(self.points, self.weights)]

    def __len__(self):
        return len(self.weights)

    def to_json(self):
        return {
            "provenance": self.provenance,
            "atoms": [
                {"coords": [[float(c.real), float(c.imag)] for c in p], "weight": float(w)}
                for p, w in zip(self.points, self.weights)
            ],
        }


def pair(nu, fn):
    """<nu, fn> = sum of weight * fn(atom)."""
    vals = _values(fn, nu.points)
    return complex(vals @ nu.weights) if np.iscomplexobj(vals) else float(vals @ nu.weights)


def fiber_measure(f, a, n, settings=None):
    """nu_n = d^{-kn} (f^n)^* delta_a as a measure on the distinct fiber points."""
    tree = backward_tree(f, a, n, settings)
    w = tree.multiplicities / float(f.topological_degree**n)
    return DiscreteMeasure(tree.points, w, "fiber")


def batch_means(values, batches=NUM_BATCHES):
    """(mean, stderr) of i.i.d. samples from ``batches`` contiguous batch means."""
    values = np.asarray(values)
    usable = len(values) - len(values) % batches
    means = values[:usable].reshape(batches, -1).mean(axis=1)
    mean = values.mean()
    if np.iscomplexobj(means):
        spread = np.sqrt(np.var(means.real, ddof=1) + np.var(means.imag, ddof=1))
    else:
        spread = np.std(means, ddof=1)
    stderr = spread / np.sqrt(batches)
    # exact ties (constant observables) still get a rounding-size error bar
    return mean, max(float(stderr), 1e-15 * max(1.0, float(np.abs(mean))))


@dataclass(frozen=True, eq=False)
class MuEstimate:
    """Endpoints of independent backward walks, in walker order.

    Error bars combine the batch-means standard error with a burn-in bias
    estimate: the change of the pairing over the last backward step
    (``previous`` holds the walkers one step before the end).
    ``stderr_oracle`` caches this for the suite observables.
    """

    measure: DiscreteMeasure
    burn_in: int
    samples: int
    start: ProjectivePoint
    seed: int
    stderr_oracle: dict = field(default_factory=dict)
    previous: np.ndarray = None

    def pair(self, fn):
        return pair(self.measure, fn)

    def pair_with_stderr(self, fn):
        vals = _values(fn, self.measure.points)
        mean, err = batch_means(vals)
        if self.previous is not None:
            bias = abs(mean - np.mean(_values(fn, self.previous)))
            err = float(np.hypot(err, bias))
        return (complex(mean) if np.iscomplexobj(vals) else float(mean)), err

    def stderr(self, fn):
        label = getattr(fn, "label", None)
        if label in self.stderr_oracle:
            return self.stderr_oracle[label]
        return self.pair_with_stderr(fn)[1]


def worker_count():
    try:
        return max(1, int(os.environ.get("EQUIDIST_THREADS", "1")))
    except ValueError:
        return 1


def _check_start(f, start):
    from .exceptional import declared_model

    model = declared_model(f)
    if model is not None and not model.is_empty:
        if model.distance_rows(start.coords[None, :])[0] <= 1e-9:
            raise ExceptionalStart(f"start {start!r} lies on the declared exceptional set of {f.label}")


def estimate_mu(f, settings=None, samples=10**5, burn_in=20, start=None, suite=None, rng_stream=0):
    """Monte Carlo estimate of the equilibrium measure by inverse iteration.

    Runs ``samples`` independent backward walks of length ``burn_in`` from
    ``start``.  Walkers are processed in fixed chunks, each with its own
    random stream, so the result does not depend on EQUIDIST_THREADS.
    """
    settings = settings or SolverSettings()
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    if burn_in < 20:
        raise ValueError("burn_in must be >= 20")
    if start is None:
        raise ValueError("a start point is required")
    if not isinstance(start, ProjectivePoint):
        start = ProjectivePoint(start)
    _check_start(f, start)
    sizes = [min(CHUNK, samples - i) for i in range(0, samples, CHUNK)]

    def run(i):
        return sample_inverse_branches(f, start, burn_in, sizes[i], settings, (rng_stream, i), previous=True)

    workers = worker_count()
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    prev = np.concatenate([p[0] for p in parts])
    pts = np.concatenate([p[1] for p in parts])
    nu = DiscreteMeasure(pts, np.full(samples, 1.0 / samples), "inverse_iteration_mc")
    if suite is None:
        from .observables import builtin_suite

        suite = builtin_suite(f.dim)
    est = MuEstimate(nu, burn_in, samples, start, settings.rng_seed, {}, prev)
    for fn in suite:
        est.stderr_oracle[fn.label] = est.pair_with_stderr(fn)[1]
    return est


def green_mu_grid_k1(f, grid_resolution=512, n=40):
    """Equilibrium measure of a map of P^1 from the Laplacian of its Green function.

    G is sampled on a grid over the unit square-disk of each of the two charts
    (|z| <= 1 with w = 1 and |u| < 1 with z = 1); the five-point Laplacian
    gives node masses, negative values are clipped to zero and the total is
    normalized to one.
    """
    if f.dim != 1:
        raise ValueError("grid estimator is for maps of P^1")
    if grid_resolution > 2048:
        raise GridOverflow(f"grid_resolution {grid_resolution} exceeds 2048")
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be >= 8")
    h = 2.0 / grid_resolution
    # one extra ring of nodes so every node of the closed disk has four neighbours
    ax = (np.arange(grid_resolution + 3) - (grid_resolution + 2) / 2) * h
    re, im = np.meshgrid(ax, ax, indexing="ij")
    c = (re + 1j * im).ravel()
    pts_all, mass_all = [], []
    worst = 0.0
    for chart in (0, 1):
        v = np.stack([c, np.ones_like(c)], axis=1) if chart == 0 else np.stack([np.ones_like(c), c], axis=1)
        g = evaluate_lift_norm_log(f, v, n).reshape(re.shape)
        if not np.all(np.isfinite(g)):
            raise GridOverflow("Green function overflowed on the grid")
        lap = g[2:, 1:-1] + g[:-2, 1:-1] + g[1:-1, 2:] + g[1:-1, :-2] - 4 * g[1:-1, 1:-1]
        worst = min(worst, float(lap.min()))
        mass = np.maximum(lap, 0.0).ravel()
        inner = c.reshape(re.shape)[1:-1, 1:-1].ravel()
        keep = (np.abs(inner) <= 1.0) if chart == 0 else (np.abs(inner) < 1.0)
        keep &= mass > 0
        vv = v.reshape(re.shape + (2,))[1:-1, 1:-1].reshape(-1, 2)[keep]
        pts_all.append(vv)
        mass_all.append(mass[keep])
    pts = np.concatenate(pts_all)
    mass = np.concatenate(mass_all)
    total = mass.sum()
    if not total > 0:
        raise GridOverflow("Laplacian has no positive mass on the grid")
    w = mass / total
    w = w / w.sum()
    diag = {"h": h, "most_negative": worst, "raw_mass": float(total / (2 * np.pi))}
    return DiscreteMeasure(pts, w, "grid", diag)


def reference_measure(f, nodes=4096):
    """Quadrature for the equilibrium measure of presets where it is known, else None.

    z2, z3: uniform on the unit circle.  torus2: Haar on the unit torus.
    cheb: the arcsine law on [-2, 2] (Chebyshev-Gauss nodes).
    """
    name = f.label
    if name in ("z2", "z3"):
        t = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
        pts = np.stack([np.exp(1j * t), np.ones(nodes)], axis=1)
    elif name == "cheb":
        x = 2 * np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)
        pts = np.stack([x + 0j, np.ones(nodes)], axis=1)
    elif name == "torus2":
        m = int(round(np.sqrt(nodes)))
        t = 2 * np.pi * (np.arange(m) + 0.5) / m
        a, b = np.meshgrid(t, t, indexing="ij")
        pts = np.stack([np.exp(1j * a).ravel(), np.exp(1j * b).ravel(), np.ones(m * m)], axis=1)
    else:
        return None
    return DiscreteMeasure.uniform(pts, "external")
