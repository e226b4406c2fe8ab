import numpy as np
from hypothesis import given, settings as hsettings, strategies as st

from equidist.roots import aberth, cluster_roots, mp_roots

unit = st.floats(-2, 2, allow_nan=False)


@hsettings(max_examples=40, deadline=None)
@given(st.lists(st.builds(complex, unit, unit), min_size=1, max_size=8))
def test_aberth_recovers_separated_roots(zs):
    zs = np.array(zs)
    gaps = np.abs(zs[:, None] - zs[None, :]) + np.eye(len(zs))
    if gaps.min() < 1e-2:
        return
    roots, ok = aberth(np.poly(zs)[None, :])
    assert ok[0]
    for z in zs:
        assert np.abs(roots[0] - z).min() < 1e-8


def test_cluster_finds_multiplicities():
    coeffs = np.poly([1.0, 1.0, 1.0, -2.0, 0.5j])
    roots, _ = aberth(coeffs[None, :])
    groups = cluster_roots(coeffs, roots[0], 1e-7)
    mults = sorted(m for _, m in groups)
    assert mults == [1, 1, 3]
    triple = [c for c, m in groups if m == 3][0]
    assert abs(triple - 1.0) < 1e-6


def test_mp_roots_high_precision():
    import mpmath

    with mpmath.workdps(50):
        c = [mpmath.mpf(1), 0, mpmath.mpf(-2)]
        r = sorted(mp_roots(c), key=lambda z: float(mpmath.re(z)))
        assert abs(r[1] - mpmath.sqrt(2)) < mpmath.mpf(10) ** -45
