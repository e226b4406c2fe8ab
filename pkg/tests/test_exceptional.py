import numpy as np
import pytest

from equidist.exceptional import (
    backward_contraction_probe,
    declared_model,
    delta0_estimate,
    detect_exceptional_k1,
    kappa_minus,
    local_degree,
    local_degree_profile,
    tubular_mass_probe,
    verify_total_invariance,
)
from equidist.maps import from_binary_forms, preset
from equidist.measures import DiscreteMeasure, MuEstimate
from equidist.projective import ProjectivePoint

ZERO, INF = ProjectivePoint([0, 1]), ProjectivePoint([1, 0])


def _points(model):
    return [ProjectivePoint(p) for p in model.points]


def test_detection_without_declaration():
    found = _points(detect_exceptional_k1(from_binary_forms([1, 0, 0], [0, 0, 1])))
    assert len(found) == 2 and any(p.isclose(ZERO) for p in found) and any(p.isclose(INF) for p in found)
    found = _points(detect_exceptional_k1(from_binary_forms([1, 0, 0.3], [0, 0, 1])))
    assert len(found) == 1 and found[0].isclose(INF)
    assert detect_exceptional_k1(from_binary_forms([1, 0, -1], [1, 0, 1])).is_empty


def test_declared_sets_are_totally_invariant():
    for name in ("z2", "z3", "basilica", "cheb", "torus2"):
        f = preset(name)
        # fibers over the coordinate lines contain double roots, hence the looser bound
        assert verify_total_invariance(f, declared_model(f)) < 1e-8
    assert declared_model(preset("rat2")).is_empty


def test_distance_to_coordinate_lines():
    model = declared_model(preset("torus2"))
    assert model.distance(ProjectivePoint([1, 1, 1])) == pytest.approx(1 / np.sqrt(3))
    assert model.distance(ProjectivePoint([1, 2, 0])) == pytest.approx(0.0)


@pytest.mark.parametrize("name,point,base", [
    ("z2", ZERO, 2), ("z2", INF, 2), ("z3", ZERO, 3), ("cheb", INF, 2),
])
def test_local_degree_at_totally_ramified_fixed_points(name, point, base):
    f = preset(name)
    assert [local_degree(f, point, n) for n in (1, 2, 3)] == [base, base**2, base**3]


def test_local_degree_along_a_critical_orbit():
    # cheb: 0 -> -2 -> 2 -> 2, only 0 is critical
    f = preset("cheb")
    assert [local_degree(f, ZERO, n) for n in (1, 2, 3)] == [2, 2, 2]
    assert local_degree(f, ProjectivePoint.affine(0.7 + 0.2j), 4) == 1
    assert local_degree(f, ZERO, 0) == 1


def test_local_degree_on_torus2():
    f = preset("torus2")
    assert local_degree(f, ProjectivePoint([0, 0, 1]), 2) == 16
    assert local_degree(f, ProjectivePoint([0, 3, 1]), 2) == 4
    assert local_degree(f, ProjectivePoint([2, 3, 1]), 2) == 1


def test_kappa_minus_and_delta0():
    f = preset("basilica")
    # the fiber of -1 is the double point 0
    assert kappa_minus(f, ProjectivePoint.affine(-1), 1) == 2
    assert kappa_minus(f, ProjectivePoint.affine(-1), 1, method="direct") == 2
    assert kappa_minus(f, ProjectivePoint.affine(0.3), 2) == 1
    assert delta0_estimate(f, ProjectivePoint.affine(-1)) == 2
    assert delta0_estimate(f, INF) == 0


def test_profile_satisfies_the_cocycle():
    f = preset("basilica")
    # 0 -> -1 -> 0 is a critical cycle, so the degree doubles every other step
    prof = local_degree_profile(f, ProjectivePoint.affine(0.0), 4)
    assert prof.kappa_n == {1: 2, 2: 2, 3: 4, 4: 4}
    assert prof.cocycle_violations(f) == []


def test_contraction_probe_respects_the_bound():
    f = preset("rat2")
    r = backward_contraction_probe(f, ProjectivePoint.affine(0.1), ProjectivePoint.affine(0.3j), 3)
    assert not r.violated and r.measured >= r.bound
    with pytest.raises(ValueError):
        backward_contraction_probe(f, INF, INF, 1)


def test_tube_probe_on_haar_torus_has_no_mass():
    # the unit torus stays at distance 1/sqrt 3 from the coordinate lines
    t = np.random.default_rng(3).uniform(0, 2 * np.pi, (5000, 2))
    pts = np.stack([np.exp(1j * t[:, 0]), np.exp(1j * t[:, 1]), np.ones(5000)], axis=1)
    nu = DiscreteMeasure.uniform(pts, "inverse_iteration_mc")
    mu = MuEstimate(nu, 20, 5000, ProjectivePoint([1, 1, 1]), 0)
    rep = tubular_mass_probe(mu, declared_model(preset("torus2")), (0.05, 0.1, 0.2, 0.3, 0.4))
    assert rep.masses == (0.0,) * 5 and rep.status == "all masses zero"
    assert np.isnan(rep.beta_hat)
    wide = tubular_mass_probe(mu, declared_model(preset("torus2")), (0.2, 0.6))
    assert wide.masses[1] == pytest.approx(1.0)
