"""Points of P^1 and P^2 in homogeneous coordinates and the chordal distance.

Points are stored as unit vectors in C^{k+1} whose first coordinate of
modulus above ``PHASE_THRESHOLD`` is real and positive.  Most routines in the
package work on arrays of such vectors with shape ``(N, k+1)``; the
``ProjectivePoint`` class wraps a single row.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, PointAtInfinity, ZeroVector

ZERO_NORM = 1e-300
# coordinates below this modulus (on the unit representative) do not fix the phase
PHASE_THRESHOLD = 1e-12
CHART_THRESHOLD = 1e-12


def canonicalize_rows(v):
    """Canonical unit representatives of the rows of ``v``.

    Raises ZeroVector if any row has norm below 1e-300.
    """
    v = np.asarray(v, dtype=complex)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    norms = np.linalg.norm(v, axis=1)
    if np.any(~(norms >= ZERO_NORM)):
        raise ZeroVector("cannot canonicalize the zero vector")
    u = v / norms[:, None]
    big = np.abs(u) > PHASE_THRESHOLD
    first = np.argmax(big, axis=1)
    lead = u[np.arange(len(u)), first]
    u = u * (np.abs(lead) / lead)[:, None]
    u[np.arange(len(u)), first] = np.abs(u[np.arange(len(u)), first])
    return u[0] if single else u


def fs_distance_rows(x, y):
    """Chordal (sine) distance between rows of ``x`` and ``y`` (broadcasting).

    Inputs need not be normalized.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatch(f"dimensions {x.shape[-1] - 1} and {y.shape[-1] - 1}")
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    # |x ^ y| / (|x||y|) equals sqrt(1 - |<x,y>|^2) but keeps full accuracy near 0
    if x.shape[-1] == 2:
        wedge = np.abs(x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0])
    else:
        wedge = np.linalg.norm(np.cross(x, y), axis=-1)
    return np.minimum(wedge / (nx * ny), 1.0)


def pairwise_fs_distance(x, y):
    """Matrix of chordal distances between the rows of x and the rows of y."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return fs_distance_rows(x[:, None, :], y[None, :, :])


def random_points(k, n, rng):
    """``n`` points distributed by the Fubini-Study volume on P^k."""
    v = rng.standard_normal((n, k + 1)) + 1j * rng.standard_normal((n, k + 1))
    return canonicalize_rows(v)


def random_unitary(size, rng):
    """Haar-distributed unitary matrix."""
    z = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def canonical_order(points):
    """Indices sorting rows into a canonical total order (stable under 1e-9 noise)."""
    pts = np.round(np.asarray(points), 9)
    keys = []
    for j in reversed(range(pts.shape[1])):
        keys.append(pts[:, j].imag)
        keys.append(pts[:, j].real)
    return np.lexsort(keys)


def to_chart_rows(v, index):
    v = np.asarray(v, dtype=complex)
    u = v / np.linalg.norm(v, axis=-1, keepdims=True)
    denom = u[..., index]
    if np.any(np.abs(denom) <= CHART_THRESHOLD):
        raise PointAtInfinity(f"chart coordinate {index} vanishes")
    out = u / denom[..., None]
    return np.delete(out, index, axis=-1)


def from_chart_rows(z, index):
    z = np.asarray(z, dtype=complex)
    return canonicalize_rows(np.insert(z, index, 1.0, axis=-1))


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """A point of P^k (k = 1 or 2), stored by its canonical representative."""

    coords: np.ndarray

    def __post_init__(self):
        c = canonicalize_rows(np.asarray(self.coords, dtype=complex).ravel())
        if c.shape[0] not in (2, 3):
            raise DimensionMismatch("only P^1 and P^2 are supported")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def dim(self):
        return self.coords.shape[0] - 1

    def __repr__(self):
        inner = ":".join(f"{c.real:.6g}{c.imag:+.6g}j" for c in self.coords)
        return f"ProjectivePoint([{inner}])"

    def isclose(self, other, tol=1e-12):
        return fs_distance(self, other) <= tol

    def to_json(self):
        return [[float(c.real), float(c.imag)] for c in self.coords]

    @classmethod
    def from_json(cls, data):
        return cls(np.array([complex(re, im) for re, im in data]))

    @classmethod
    def affine(cls, *coords):
        """Point with affine coordinates ``coords`` in the last chart, e.g. affine(2) = [2:1]."""
        return cls(np.array([*coords, 1.0], dtype=complex))


def canonicalize(raw):
    return ProjectivePoint(np.asarray(raw, dtype=complex))


def fs_distance(x, y):
    if x.dim != y.dim:
        raise DimensionMismatch(f"points of P^{x.dim} and P^{y.dim}")
    return float(fs_distance_rows(x.coords, y.coords))


def to_chart(x, index):
    if not 0 <= index <= x.dim:
        raise ValueError(f"chart index {index} out of range for P^{x.dim}")
    return to_chart_rows(x.coords, index)


def from_chart(z, index):
    return ProjectivePoint(from_chart_rows(np.atleast_1d(z), index))


def as_rows(points):
    """Accept a ProjectivePoint, a sequence of them, or an array; return (N, k+1) array."""
    if isinstance(points, ProjectivePoint):
        return points.coords[None, :]
    if isinstance(points, (list, tuple)) and points and isinstance(points[0], ProjectivePoint):
        return np.array([p.coords for p in points])
    arr = np.asarray(points, dtype=complex)
    return arr[None, :] if arr.ndim == 1 else arr
