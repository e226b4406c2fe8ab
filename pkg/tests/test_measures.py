import numpy as np
import pytest

from equidist.errors import ExceptionalStart, GridOverflow
from equidist.fibers import SolverSettings
from equidist.maps import preset
from equidist.measures import (
    DiscreteMeasure,
    batch_means,
    estimate_mu,
    fiber_measure,
    green_mu_grid_k1,
    pair,
    reference_measure,
)
from equidist.observables import builtin
from equidist.projective import ProjectivePoint


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([[1, 0], [0, 1]]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        DiscreteMeasure(np.array([[1, 0], [0, 1]]), np.array([1.0, 0.0]))
    nu = DiscreteMeasure.dirac(ProjectivePoint.affine(2))
    assert pair(nu, lambda v: np.ones(len(v))) == 1.0


def test_first_fiber_pairing_of_z2():
    # nu_1 for a = 2 sits on +-sqrt 2, where Z = (1 - 2)/(1 + 2)
    nu = fiber_measure(preset("z2"), ProjectivePoint.affine(2), 1)
    assert pair(nu, builtin("Z", 1)) == pytest.approx(-1 / 3, abs=1e-12)


def test_batch_means_on_gaussian_noise():
    x = np.random.default_rng(0).standard_normal(160000)
    mean, err = batch_means(x)
    assert err == pytest.approx(1 / 400, rel=0.5)
    assert abs(mean) < 4 * err


def test_reference_measures():
    assert reference_measure(preset("rat2")) is None
    ref = reference_measure(preset("cheb"))
    x = lambda v: (v[:, 0] / v[:, 1]).real
    assert pair(ref, x) == pytest.approx(0.0, abs=1e-12)
    assert pair(ref, lambda v: x(v) ** 2) == pytest.approx(2.0, abs=1e-12)


def test_mu_for_z2_lives_on_the_circle():
    mu = estimate_mu(preset("z2"), SolverSettings(), 4000, 20, ProjectivePoint.affine(0.3 + 0.1j))
    r = np.abs(mu.measure.points[:, 0] / mu.measure.points[:, 1])
    assert np.all(np.abs(r - 1) < 1e-4)
    value, err = mu.pair_with_stderr(builtin("X", 1))
    assert abs(value) <= 4 * err


def test_mu_is_reproducible():
    f = preset("basilica")
    a = estimate_mu(f, SolverSettings(rng_seed=5), 2000, 20, ProjectivePoint.affine(0.1))
    b = estimate_mu(f, SolverSettings(rng_seed=5), 2000, 20, ProjectivePoint.affine(0.1))
    assert np.array_equal(a.measure.points, b.measure.points)


def test_exceptional_start_is_refused():
    with pytest.raises(ExceptionalStart):
        estimate_mu(preset("z2"), SolverSettings(), 2000, 20, ProjectivePoint.affine(0))
    with pytest.raises(ExceptionalStart):
        estimate_mu(preset("torus2"), SolverSettings(), 2000, 20, ProjectivePoint([1, 2, 0]))


def test_green_grid_for_z2():
    nu = green_mu_grid_k1(preset("z2"), 128)
    r = np.abs(nu.points[:, 0] / nu.points[:, 1])
    near = nu.weights[np.abs(r - 1) < 0.05].sum()
    assert near > 0.95
    assert nu.diagnostics["raw_mass"] == pytest.approx(1.0, rel=0.1)
    with pytest.raises(GridOverflow):
        green_mu_grid_k1(preset("z2"), 4096)
