import numpy as np
import pytest
from hypothesis import given, strategies as st

from equidist.errors import DimensionMismatch, ZeroVector
from equidist.projective import (
    ProjectivePoint,
    canonicalize_rows,
    fs_distance,
    fs_distance_rows,
    from_chart,
    pairwise_fs_distance,
    random_points,
    to_chart,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
cplx = st.builds(complex, finite, finite)


def chordal(z, w):
    return abs(z - w) / np.sqrt((1 + abs(z) ** 2) * (1 + abs(w) ** 2))


@given(st.lists(cplx, min_size=2, max_size=3), cplx)
def test_canonical_form_ignores_scaling(coords, lam):
    v = np.array(coords)
    if np.linalg.norm(v) < 1e-6 or abs(lam) < 1e-6:
        return
    a, b = canonicalize_rows(v), canonicalize_rows(lam * v)
    assert fs_distance_rows(a, b) < 1e-10
    assert np.isclose(np.linalg.norm(a), 1.0)


@given(cplx, cplx)
def test_distance_on_the_line_is_chordal(z, w):
    d = fs_distance(ProjectivePoint.affine(z), ProjectivePoint.affine(w))
    assert d == pytest.approx(chordal(z, w), abs=1e-9)


def test_distance_between_zero_and_infinity_is_one():
    assert fs_distance(ProjectivePoint([0, 1]), ProjectivePoint([1, 0])) == pytest.approx(1.0)


def test_distance_triangle_inequality(rng):
    x, y, z = (random_points(2, 500, rng) for _ in range(3))
    dxy, dyz, dxz = fs_distance_rows(x, y), fs_distance_rows(y, z), fs_distance_rows(x, z)
    assert np.all(dxz <= dxy + dyz + 1e-12)
    assert np.all((dxy >= 0) & (dxy <= 1 + 1e-12))


def test_pairwise_matches_rowwise(rng):
    x, y = random_points(1, 7, rng), random_points(1, 5, rng)
    full = pairwise_fs_distance(x, y)
    assert full.shape == (7, 5)
    assert np.allclose(full[3], fs_distance_rows(np.repeat(x[3:4], 5, axis=0), y))


def test_chart_round_trip():
    p = ProjectivePoint([2 + 1j, 3, 1])
    for i in range(3):
        q = from_chart(to_chart(p, i), i)
        assert p.isclose(q)


def test_bad_inputs():
    with pytest.raises(ZeroVector):
        ProjectivePoint([0, 0])
    with pytest.raises(DimensionMismatch):
        ProjectivePoint([1, 2, 3, 4])
    with pytest.raises(DimensionMismatch):
        fs_distance(ProjectivePoint([1, 0]), ProjectivePoint([1, 0, 0]))


def test_json_round_trip():
    p = ProjectivePoint([1j, 2, 0.5])
    assert ProjectivePoint.from_json(p.to_json()).isclose(p)
