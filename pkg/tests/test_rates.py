import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from equidist.errors import InsufficientSignal
from equidist.fibers import SolverSettings, backward_tree, sample_inverse_branches
from equidist.maps import preset
from equidist.measures import batch_means
from equidist.observables import builtin
from equidist.projective import ProjectivePoint
from equidist.rates import (
    RateExperimentConfig,
    fiber_holder_probe,
    fit_rate,
    l_value,
    log_prefactor_scan,
    matching_cost,
    rate_verdict,
    run_exceptional_control,
    run_rate_experiment,
)


def closed_form_e(n, a=2.0):
    # the fiber of a under z^(2^n) lies on |z| = r_n = a^(2^-n), where |Z| = (r^2 - 1)/(r^2 + 1)
    r2 = a ** (2.0 ** (1 - n))
    return (r2 - 1) / (r2 + 1)


def test_z2_rate_matches_closed_form():
    rep = run_rate_experiment(RateExperimentConfig(preset("z2"), ProjectivePoint.affine(2)))
    assert rep.e_n[1] == pytest.approx(1 / 3, abs=1e-12)
    assert rep.e_n[2] == pytest.approx((math.sqrt(2) - 1) / (math.sqrt(2) + 1), abs=1e-12)
    for n, e in rep.e_n.items():
        assert abs(e - closed_form_e(n)) <= 1e-8
    assert 0.48 <= rep.fitted_rate_rho <= 0.52
    assert rep.verdict == "pass" and rep.mu_reference == "exact"


def test_monte_carlo_reference_agrees():
    cfg = RateExperimentConfig(preset("z2"), ProjectivePoint.affine(2), n_range=(1, 2, 3, 4), mu_samples=20000,
                               mu_method="mc")
    rep = run_rate_experiment(cfg)
    assert rep.mu_reference == "mc"
    for n, e in rep.e_n.items():
        assert abs(e - closed_form_e(n)) <= rep.noise_floor + 1e-12


def test_tree_and_sampled_pairings_agree():
    f, a, Z = preset("basilica"), ProjectivePoint.affine(0.4 + 0.3j), builtin("Z")
    s = SolverSettings(rng_seed=9)
    for n in (2, 4, 6):
        tree = backward_tree(f, a, n, s)
        exact = float(Z.func(tree.points) @ tree.multiplicities) / 2**n
        mean, err = batch_means(Z(sample_inverse_branches(f, a, n, 100000, s, n)))
        assert abs(mean - exact) <= 4 * err


@given(st.floats(0.01, 1.5), st.floats(1.01, 1.99), st.floats(1.01, 1.99), st.floats(0.1, 2.0))
def test_verdict_is_monotone_in_lambda(rho, lam1, lam2, alpha):
    lo, hi = sorted((lam1, lam2))
    if rate_verdict(rho, hi, alpha) == "pass":
        assert rate_verdict(rho, lo, alpha) == "pass"


def test_fit_needs_signal():
    e = {n: 0.5**n for n in range(1, 8)}
    window, rho = fit_rate(e, 0.0)
    assert rho == pytest.approx(0.5)
    with pytest.raises(InsufficientSignal):
        fit_rate(e, 0.2)
    assert rate_verdict(float("nan"), 1.9, 2.0) == "inconclusive"


@pytest.mark.parametrize("name,point", [("z2", [0, 1]), ("z2", [1, 0]), ("basilica", [1, 0]), ("cheb", [1, 0])])
def test_controls_do_not_converge(name, point):
    rep = run_exceptional_control(RateExperimentConfig(preset(name), ProjectivePoint(point)))
    assert rep.verdict == "non-convergent"
    assert max(rep.e_n.values()) >= 0.1


def test_control_and_rate_refuse_the_wrong_side():
    with pytest.raises(ValueError):
        run_rate_experiment(RateExperimentConfig(preset("z2"), ProjectivePoint([0, 1])))
    with pytest.raises(ValueError):
        run_exceptional_control(RateExperimentConfig(preset("z2"), ProjectivePoint.affine(2)))
    with pytest.raises(ValueError):
        RateExperimentConfig(preset("z2"), ProjectivePoint.affine(2), lambda_target=2.5)


def test_l_value():
    assert l_value(preset("rat2"), ProjectivePoint.affine(0.1)) == 1.0
    eps = 1e-5
    expect = 1 + math.log(math.sqrt(1 + eps**2) / eps)
    assert l_value(preset("z2"), ProjectivePoint.affine(eps)) == pytest.approx(expect)


def test_prefactor_scan_on_a_map_without_exceptional_points():
    seq = [ProjectivePoint.affine(10.0**-j) for j in (1, 3, 5)]
    scan = log_prefactor_scan(preset("rat2"), a_sequence=seq, n_range=tuple(range(1, 7)))
    assert scan.l_values == (1.0, 1.0, 1.0)


def test_matching_cost_of_square_roots():
    # fibers of eps^2 and -eps^2 under z^2: {+-eps} and {+-i eps}
    eps = 1e-3
    xs = np.array([[eps, 1], [-eps, 1]], dtype=complex)
    ys = np.array([[1j * eps, 1], [-1j * eps, 1]], dtype=complex)
    assert matching_cost(xs, ys) == pytest.approx(eps * math.sqrt(2), rel=1e-5)


@pytest.mark.parametrize("name,base,expect,tol", [
    ("z2", [1, 1], 1.0, 0.05), ("z2", [0, 1], 0.5, 0.05), ("z3", [0, 1], 1 / 3, 0.04),
])
def test_holder_exponents(name, base, expect, tol):
    rep = fiber_holder_probe(preset(name), ProjectivePoint(base))
    assert abs(rep.fitted_exponent - expect) <= tol
    assert rep.local_multiplicity_m == round(1 / expect)


def test_holder_scales_are_checked():
    with pytest.raises(ValueError):
        fiber_holder_probe(preset("z2"), ProjectivePoint([0, 1]), scales=[1e-9, 1e-3])
