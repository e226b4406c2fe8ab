"""Univariate root finding: batched Aberth-Ehrlich iteration and root clustering.

Polynomials are coefficient arrays with the leading coefficient first, as in
``numpy.polyval``.  ``aberth`` works on a batch of polynomials of one degree
at once; ``cluster_roots`` turns raw roots of one polynomial into distinct
roots with multiplicities.
"""

import math

import mpmath
import numpy as np

EPS = np.finfo(float).eps


def _initial_guesses(coeffs):
    n, m = coeffs.shape
    deg = m - 1
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(coeffs))
    r = np.exp(np.clip(newton_polygon_log_radii_batch(logs), -690, 690))
    r = np.where(r < 1e-290, 1e-12, r)
    angles = 2 * np.pi * np.arange(deg) / deg + 0.4 + 0.1 * np.arange(deg) / deg
    return r * np.exp(1j * angles)[None, :]


def newton_polygon_log_radii_batch(logs):
    """Log moduli suggested by the Newton polygon for each row of log|coefficients|.

    Rows hold log|c_j| with the leading coefficient first.  The slope of the
    upper hull over [i, i+1] (in the power variable) is
    min_{a<=i} max_{b>i} slope(a, b); roots have modulus about exp(-slope).
    Returns an (N, D) array sorted by increasing modulus.
    """
    logs = np.atleast_2d(logs)
    deg = logs.shape[1] - 1
    y = logs[:, ::-1]  # indexed by power
    p = np.arange(deg + 1)
    gap = (p[None, :] - p[:, None]).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (y[:, None, :] - y[:, :, None]) / gap[None]
    s = np.where(np.isnan(s), -np.inf, s)
    out = np.empty((logs.shape[0], deg))
    for i in range(deg):
        inner = s[:, : i + 1, i + 1 :].max(axis=2)
        out[:, i] = -inner.min(axis=1)
    return np.where(np.isfinite(out), out, np.where(out > 0, 690.0, -690.0))


def aberth(coeffs, tol=4 * EPS, max_iter=400):
    """All roots of each row of ``coeffs`` (shape (N, D+1), leading coefficient nonzero).

    Returns (roots (N, D), converged (N,) bool).
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    n, m = coeffs.shape
    deg = m - 1
    if deg == 0:
        return np.empty((n, 0), dtype=complex), np.ones(n, bool)
    coeffs = coeffs / coeffs[:, :1]
    if deg == 1:
        return -coeffs[:, 1:2], np.ones(n, bool)
    if deg == 2:
        return _quadratic(coeffs), np.ones(n, bool)
    dcoeffs = coeffs[:, :-1] * np.arange(deg, 0, -1)
    z = _initial_guesses(coeffs)
    active = np.ones(n, bool)
    done = np.zeros((n, deg), bool)
    eye = np.eye(deg, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        za = z[idx]
        c = coeffs[idx]
        dc = dcoeffs[idx]
        p = np.zeros_like(za)
        bound = np.zeros(za.shape)
        aza = np.abs(za)
        for j in range(m):
            p = p * za + c[:, j : j + 1]
            bound = bound * aza + np.abs(c[:, j : j + 1])
        dp = np.zeros_like(za)
        for j in range(deg):
            dp = dp * za + dc[:, j : j + 1]
        diff = za[:, :, None] - za[:, None, :]
        diff[:, eye] = 1.0
        inv = 1.0 / diff
        inv[:, eye] = 0.0
        s = inv.sum(axis=2)
        with np.errstate(all="ignore"):
            ratio = p / dp
            delta = ratio / (1.0 - ratio * s)
        bad = ~np.isfinite(delta)
        delta[bad] = 0.0
        # stop on a tiny step or once |p| is at the level of its own rounding error
        conv = (np.abs(delta) <= tol * np.maximum(aza, 1e-300)) | (np.abs(p) <= 4 * m * EPS * bound)
        delta[done[idx]] = 0.0
        za = za - delta
        z[idx] = za
        done[idx] |= conv
        active[idx] = ~np.all(done[idx], axis=1)
    return z, ~active


def _quadratic(coeffs):
    # monic rows z^2 + b z + c, cancellation-free form
    b, c = coeffs[:, 1], coeffs[:, 2]
    disc = np.sqrt(b * b - 4 * c)
    sign = np.where((b.conj() * disc).real >= 0, 1.0, -1.0)
    q = -0.5 * (b + sign * disc)
    with np.errstate(all="ignore"):
        r2 = np.where(q != 0, c / q, 0.0)
    return np.stack([q, r2], axis=1)


def polish(coeffs, roots, iters=3):
    """A few Newton steps on each root (shapes as in ``aberth``)."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    z = np.array(roots, dtype=complex)
    deg = coeffs.shape[1] - 1
    dcoeffs = coeffs[:, :-1] * np.arange(deg, 0, -1)
    for _ in range(iters):
        p = np.zeros_like(z)
        for j in range(deg + 1):
            p = p * z + coeffs[:, j : j + 1]
        dp = np.zeros_like(z)
        for j in range(deg):
            dp = dp * z + dcoeffs[:, j : j + 1]
        with np.errstate(all="ignore"):
            step = p / dp
        ok = np.isfinite(step) & (np.abs(step) < 1e-3 * (1 + np.abs(z)))
        z = np.where(ok, z - step, z)
    return z


def taylor_coefficients(coeffs, c, upto):
    """Taylor coefficients t_0..t_upto of the polynomial at c, with rounding bounds."""
    coeffs = np.asarray(coeffs, dtype=complex)
    deg = len(coeffs) - 1
    by_power = coeffs[::-1]
    t = np.zeros(upto + 1, dtype=complex)
    err = np.zeros(upto + 1)
    ac = abs(c)
    for j in range(upto + 1):
        for i in range(j, deg + 1):
            b = math.comb(i, j)
            t[j] += by_power[i] * b * c ** (i - j)
            err[j] += abs(by_power[i]) * b * ac ** (i - j)
    return t, 8 * (deg + 1) * EPS * err


def _refine_center(coeffs, c, m, reach):
    # the (m-1)-th derivative has a simple root at an m-fold root
    d = np.asarray(coeffs, dtype=complex)
    for _ in range(m - 1):
        d = np.polyder(d)
    dd = np.polyder(d)
    c0 = c
    for _ in range(8):
        den = np.polyval(dd, c)
        if den == 0:
            break
        step = np.polyval(d, c) / den
        if not np.isfinite(step):
            break
        c = c - step
    return c if abs(c - c0) <= reach else c0


def _is_multiple_root(coeffs, c, m, radius):
    t, err = taylor_coefficients(coeffs, c, m)
    scale = abs(t[m])
    if scale == 0:
        return False
    for j in range(m):
        if abs(t[j]) > 10 * err[j] + scale * radius ** (m - j):
            return False
    return True


def _link_groups(z, radius):
    n = len(z)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(z[i] - z[j]) <= radius * (1 + max(abs(z[i]), abs(z[j]))):
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def cluster_roots(coeffs, roots, radius, loose=1e-2):
    """Group raw roots into distinct roots with multiplicities.

    A group of m nearby raw roots is accepted as one m-fold root when the
    Taylor coefficients t_0..t_{m-1} at the group mean vanish up to rounding
    or up to the scale implied by ``radius``.  Rejected groups are split at a
    10x smaller linkage radius until the radius falls below ``radius``.

    Returns a list of (root, multiplicity).
    """
    roots = np.asarray(roots, dtype=complex)
    out = []

    def visit(idx, r):
        if len(idx) == 1:
            out.append((roots[idx[0]], 1))
            return
        c = roots[idx].mean()
        spread = np.abs(roots[idx] - c).max()
        c = _refine_center(coeffs, c, len(idx), 4 * spread + 1e-12 * (1 + abs(c)))
        if _is_multiple_root(coeffs, c, len(idx), radius * (1 + abs(c) ** 2)):
            out.append((c, len(idx)))
            return
        if r <= radius:
            for i in idx:
                out.append((roots[i], 1))
            return
        for g in _link_groups(roots[idx], r / 10):
            visit([idx[i] for i in g], r / 10)

    for g in _link_groups(roots, loose):
        visit(g, loose)
    return out


def min_separation(roots):
    """Smallest relative gap between roots of each row (N, D) -> (N,)."""
    z = np.atleast_2d(roots)
    if z.shape[1] < 2:
        return np.full(z.shape[0], np.inf)
    diff = np.abs(z[:, :, None] - z[:, None, :])
    scale = 1 + np.maximum(np.abs(z)[:, :, None], np.abs(z)[:, None, :])
    rel = diff / scale
    i = np.arange(z.shape[1])
    rel[:, i, i] = np.inf
    return rel.min(axis=(1, 2))


# -- arbitrary precision ---------------------------------------------------


def mp_taylor_shift(coeffs, c):
    """Coefficients (leading first) of p(c + t) as a polynomial in t."""
    out = [mpmath.mpc(a) for a in coeffs]
    n = len(out)
    for i in range(n - 1):
        for j in range(1, n - i):
            out[j] += c * out[j - 1]
    return out


def mp_roots(coeffs, max_iter=200, center=None):
    """All roots of a polynomial with mpmath coefficients (leading first).

    Aberth iteration at the current mpmath precision started from
    Newton-polygon moduli, so tightly clustered and widely scaled roots are
    both located.  With ``center`` the polynomial is shifted first, which
    makes a tight cluster around ``center`` visible to the Newton polygon.
    Returns a list of mpc.
    """
    if center is not None:
        return [center + t for t in mp_roots(mp_taylor_shift(coeffs, center), max_iter)]
    coeffs = [mpmath.mpc(c) for c in coeffs]
    while coeffs and coeffs[0] == 0:
        coeffs = coeffs[1:]
    deg = len(coeffs) - 1
    if deg <= 0:
        return []
    lead = coeffs[0]
    coeffs = [c / lead for c in coeffs]
    if deg == 1:
        return [-coeffs[1]]
    logs = []
    for c in coeffs:
        logs.append(float(mpmath.log(abs(c))) if c != 0 else -np.inf)
    # radii from the hull computed in log space to avoid float overflow
    radii = _newton_polygon_log_radii(logs)
    z = []
    for j, lr in enumerate(radii):
        ang = 2 * math.pi * j / deg + 0.4 + 0.1 * j / deg
        z.append(mpmath.exp(mpmath.mpf(lr)) * mpmath.expjpi(ang / math.pi))
    dcoeffs = [coeffs[j] * (deg - j) for j in range(deg)]
    tol = mpmath.mpf(2) ** (-mpmath.mp.prec + 8)
    done = [False] * deg
    for _ in range(max_iter):
        all_done = True
        for i in range(deg):
            if done[i]:
                continue
            zi = z[i]
            p = coeffs[0]
            for c in coeffs[1:]:
                p = p * zi + c
            dp = dcoeffs[0]
            for c in dcoeffs[1:]:
                dp = dp * zi + c
            if p == 0:
                done[i] = True
                continue
            s = mpmath.fsum(1 / (zi - z[j]) for j in range(deg) if j != i)
            ratio = p / dp
            delta = ratio / (1 - ratio * s)
            z[i] = zi - delta
            if abs(delta) <= tol * abs(z[i]):
                done[i] = True
            else:
                all_done = False
        if all_done:
            break
    return z


def _newton_polygon_log_radii(logs):
    deg = len(logs) - 1
    pts = sorted((deg - j, logs[j]) for j in range(deg + 1) if np.isfinite(logs[j]))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (p[0] - x1) <= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    radii = []
    if hull[0][0] > 0:
        radii.extend([-690.0] * hull[0][0])
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        radii.extend([-(y2 - y1) / (x2 - x1)] * (x2 - x1))
    return radii
