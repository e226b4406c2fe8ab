import math

import numpy as np
import pytest

from equidist.errors import ScheduleUnderflow
from equidist.fibers import SolverSettings
from equidist.maps import preset
from equidist.measures import estimate_mu
from equidist.observables import builtin, constant
from equidist.operators import invariance_checks, lambda_op, pushforward, telescope_run
from equidist.projective import ProjectivePoint, random_points


def test_pushforward_of_a_constant_counts_preimages(rng):
    x = random_points(1, 20, rng)
    assert np.allclose(pushforward(constant(1.5, 1), preset("z3"))(x), 4.5)
    y = random_points(2, 5, rng)
    assert np.allclose(pushforward(constant(1.0, 2), preset("torus2"))(y), 4.0)
    assert np.allclose(lambda_op(constant(1.0, 2), preset("torus2"))(y), 2.0)


def test_pushforward_by_z2_closed_forms():
    # X is odd under z -> -z, and Z(sqrt w) depends on |w| only
    w = np.array([0.3 + 0.4j, 2.0, -1j * 7])
    v = np.stack([w, np.ones_like(w)], axis=1)
    f = preset("z2")
    assert np.allclose(pushforward(builtin("X"), f)(v), 0.0, atol=1e-12)
    expect = 2 * (1 - np.abs(w)) / (1 + np.abs(w))
    assert np.allclose(pushforward(builtin("Z"), f)(v), expect)
    two = pushforward(builtin("Z"), f, order=2)
    assert np.allclose(two(v), 4 * (1 - np.abs(w) ** 0.5) / (1 + np.abs(w) ** 0.5))
    assert two.mass == 4 and two.label == "f_*^2(Z)"


def test_pushforward_memo_is_consistent():
    fn = pushforward(builtin("XY"), preset("basilica"))
    p = ProjectivePoint.affine(0.2 + 0.5j)
    assert fn(p) == fn(p) == fn(p.coords[None, :])[0]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        pushforward(builtin("X"), preset("torus2"))


def test_invariance_on_rat2():
    f = preset("rat2")
    mu = estimate_mu(f, SolverSettings(rng_seed=1), 20000, 20, ProjectivePoint.affine(0.31 + 0.17j))
    checks = invariance_checks(f, mu)
    assert set(checks) == {"X", "Y", "Z", "XY", "XZ", "sqrt_abs_X"}
    assert all(c["ok"] for c in checks.values())


def test_telescope_schedule():
    f = preset("z2")
    states = telescope_run(builtin("Z"), f, ProjectivePoint.affine(2), 2, 1.0, 1.5, grid=(16, 32), pairing_atoms=1000)
    assert [s.level for s in states] == [1, 2]
    l_value = states[0].schedule_params[2]
    # chordal distance from 2 to infinity is 1/sqrt 5
    assert l_value == pytest.approx(1 + math.log(math.sqrt(5)))
    for s in states:
        assert s.theta_i == pytest.approx(math.exp(-l_value * 1.5**s.level * 2))
        assert np.isfinite(s.c_i) and s.phi_sup < 10
    with pytest.raises(ScheduleUnderflow) as err:
        telescope_run(builtin("Z"), f, ProjectivePoint.affine(2), 2, 500.0, 1.5, grid=(8, 16))
    assert err.value.states == []
    with pytest.raises(ValueError):
        telescope_run(builtin("Z"), f, ProjectivePoint.affine(2), 2, 1.0, 2.5)
