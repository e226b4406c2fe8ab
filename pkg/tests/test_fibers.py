import numpy as np
import pytest

from equidist.errors import TreeTooLarge
from equidist.fibers import (
    SolverSettings,
    backward_tree,
    fiber,
    raw_preimages,
    sample_inverse_branches,
)
from equidist.maps import evaluate_rows, preset
from equidist.projective import ProjectivePoint, fs_distance_rows, random_points


def _has(points, target, tol=1e-10):
    return np.min(fs_distance_rows(points, ProjectivePoint(target).coords[None, :])) < tol


def test_square_roots_of_four():
    fib = fiber(preset("z2"), ProjectivePoint.affine(4))
    assert len(fib) == 2 and list(fib.multiplicities) == [1, 1]
    assert _has(fib.points, [2, 1]) and _has(fib.points, [-2, 1])


def test_critical_value_gives_a_double_point():
    fib = fiber(preset("z2"), ProjectivePoint.affine(0))
    assert len(fib) == 1 and fib.total_multiplicity == 2
    fib = fiber(preset("z3"), ProjectivePoint([1, 0]))
    assert len(fib) == 1 and fib.total_multiplicity == 3


def test_cheb_fiber_of_minus_two():
    # z^2 - 2 = -2 only at z = 0, which is critical
    fib = fiber(preset("cheb"), ProjectivePoint.affine(-2))
    assert fib.total_multiplicity == 2 and len(fib) == 1


def test_torus2_generic_fiber_is_four_simple_points():
    fib = fiber(preset("torus2"), ProjectivePoint([4, 9, 1]))
    assert len(fib) == 4 and list(fib.multiplicities) == [1, 1, 1, 1]
    for sz in (2, -2):
        for sw in (3, -3):
            assert _has(fib.points, [sz, sw, 1])


def test_torus2_vertex_is_fourfold():
    fib = fiber(preset("torus2"), ProjectivePoint([0, 0, 1]))
    assert len(fib) == 1 and fib.total_multiplicity == 4


def test_tree_mass_and_residual(map_k1):
    tree = backward_tree(map_k1, ProjectivePoint.affine(0.37 + 0.21j), 6)
    assert tree.total_multiplicity == map_k1.degree**6
    assert tree.residual <= 1e-8


def test_preimages_map_back(map_k1, rng):
    x = random_points(1, 30, rng)
    pre = raw_preimages(map_k1, x)
    assert pre.shape == (30, map_k1.degree, 2)
    back = evaluate_rows(map_k1, pre.reshape(-1, 2))
    assert np.all(fs_distance_rows(back, np.repeat(x, map_k1.degree, axis=0)) < 1e-9)


def test_tree_levels_and_limit():
    f = preset("z2")
    levels = backward_tree(f, ProjectivePoint.affine(2), 3, levels=True)
    assert [lv.total_multiplicity for lv in levels] == [1, 2, 4, 8]
    with pytest.raises(TreeTooLarge):
        backward_tree(f, ProjectivePoint.affine(2), 5, SolverSettings(max_tree_nodes=16))


def test_tree_is_deterministic():
    f = preset("rat2")
    a = backward_tree(f, ProjectivePoint.affine(0.2), 5)
    b = backward_tree(f, ProjectivePoint.affine(0.2), 5)
    assert np.array_equal(a.points, b.points)
    assert a.to_csv() == b.to_csv()


def test_branch_sampler_is_seeded():
    f = preset("basilica")
    s = SolverSettings(rng_seed=3)
    a = sample_inverse_branches(f, ProjectivePoint.affine(0.1), 10, 50, s)
    b = sample_inverse_branches(f, ProjectivePoint.affine(0.1), 10, 50, s)
    c = sample_inverse_branches(f, ProjectivePoint.affine(0.1), 10, 50, SolverSettings(rng_seed=4))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all(fs_distance_rows(evaluate_rows(f, a), a) < 1.0)


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(cluster_radius=1e-13)
