import numpy as np
import pytest

from equidist.errors import NotC1
from equidist.observables import (
    RegularizationScheme,
    builtin,
    builtin_suite,
    constant,
    geodesic,
    linear_combination,
    regularize,
    sup_vs_log_gradient_check,
    tangent_basis,
)
from equidist.projective import ProjectivePoint, fs_distance_rows, random_points


def test_sphere_coordinates_of_landmarks():
    X, Y, Z = builtin("X"), builtin("Y"), builtin("Z")
    one = ProjectivePoint.affine(1)
    assert (X(one), Y(one), Z(one)) == pytest.approx((1.0, 0.0, 0.0))
    assert Z(ProjectivePoint([1, 0])) == pytest.approx(-1.0)
    assert Y(ProjectivePoint.affine(1j)) == pytest.approx(1.0)


def test_sphere_coordinates_lie_on_the_unit_sphere(rng):
    x = random_points(1, 1000, rng)
    r2 = builtin("X")(x) ** 2 + builtin("Y")(x) ** 2 + builtin("Z")(x) ** 2
    assert np.allclose(r2, 1.0)


def test_declared_constants_dominate_true_values():
    # X is the restriction of a linear function on the unit sphere: sup 1, gradient 1
    X = builtin("X")
    assert X.sup_norm >= 1.0 and X.grad_sup >= 1.0
    assert X.holder_alpha == 2.0
    rough = builtin("sqrt_abs_X")
    assert rough.holder_alpha == 0.5 and rough.grad_sup is None


def test_suites():
    labels1 = [fn.label for fn in builtin_suite(1)]
    assert labels1 == ["X", "Y", "Z", "XY", "XZ", "sqrt_abs_X"]
    assert len(builtin_suite(2)) == 9
    with pytest.raises(ValueError):
        builtin_suite(3)


def test_algebra(rng):
    x = random_points(1, 50, rng)
    X, Z = builtin("X"), builtin("Z")
    comb = linear_combination([(2.0, X), (-1.0, Z)])
    assert np.allclose(comb(x), 2 * X(x) - Z(x))
    assert np.allclose(X.shifted(0.5)(x), X(x) + 0.5)
    assert np.allclose(X.scaled(3.0)(x), 3 * X(x))
    assert np.allclose(constant(2.5, 1)(x), 2.5)


def test_geodesic_moves_by_the_requested_distance(rng):
    x = random_points(2, 20, rng)
    basis = tangent_basis(x)
    y = geodesic(x, basis[:, 1], 0.01)
    assert np.allclose(fs_distance_rows(x, y), np.sin(0.01), rtol=1e-6)


def test_regularization_bound(rng):
    X = builtin("X")
    x = random_points(1, 500, rng)
    for theta in (0.1, 0.01):
        scheme = RegularizationScheme(theta, 1, 100, 0)
        reg = regularize(X, scheme)
        diff = np.abs(reg(x) - X(x)).max()
        assert diff <= X.grad_sup * scheme.displacement_factor_eta * theta
    assert regularize(X, RegularizationScheme(0.1, 1)).label == "X@theta=0.1"


def test_sup_against_log_gradient():
    rep = sup_vs_log_gradient_check(builtin("X").normalized())
    assert not rep.violated
    with pytest.raises(NotC1):
        sup_vs_log_gradient_check(builtin("sqrt_abs_X"))
