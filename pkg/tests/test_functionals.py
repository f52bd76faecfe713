import numpy as np
import pytest

from flatsteady import (CasimirModel, ScalingParams, SolverOptions,
                        evaluate_ensemble, evaluate_steady, rescale_steady,
                        sample, scaling_inequality_check, split_diagnostic,
                        stability_distance)
from flatsteady.functionals import (alpha_from_mu3, bilinearity_check,
                                    calibrate_lower_bound, interpolation_check,
                                    lower_bound_check, proof_scaling_params)
from flatsteady.simulate import ParticleEnsemble
from flatsteady.errors import InputError


@pytest.fixture(scope="module")
def report_half(poly_half, ss_half):
    return evaluate_steady(poly_half, ss_half)


def test_report_structure(report_half):
    rep = report_half
    assert rep.p == rep.e_kin + rep.casimir
    assert rep.d == rep.p + rep.e_pot
    assert rep.e_kin >= 0.0 and rep.casimir >= 0.0 and rep.e_pot <= 0.0


def test_minimizer_has_negative_d(report_half):
    assert report_half.d < 0.0


def test_virial_identity(report_half):
    assert abs(2.0 * report_half.e_kin + report_half.e_pot) <= 0.01 * abs(report_half.e_pot)


def test_report_json_schema(report_half):
    out = report_half.to_dict(checks=[{"name": "x", "lhs": 1.0, "rhs": 2.0,
                                       "pass": True}])
    assert set(out) == {"mass", "e_kin", "e_pot", "casimir", "p", "d", "checks"}


def test_evaluate_rejects_unconverged(poly_half, ss_half):
    from dataclasses import replace
    bad = replace(ss_half, residual=1.0)
    with pytest.raises(InputError):
        evaluate_steady(poly_half, bad)


def test_identity_scaling(poly_half, ss_half):
    res = rescale_steady(poly_half, ss_half, ScalingParams(1.0, 1.0, 1.0))
    for key in ("mass", "e_kin", "e_pot", "casimir"):
        assert res["predicted"][key] == pytest.approx(res["base"][key], rel=1e-12)
        assert res["direct"][key] == pytest.approx(res["base"][key], rel=1e-9)


def test_mass_scaling_quarter(poly_half, ss_half):
    # a = 1, b = 2, c = 1 sends the mass to M/4
    res = rescale_steady(poly_half, ss_half, ScalingParams(1.0, 2.0, 1.0))
    assert res["predicted"]["mass"] == pytest.approx(0.25, rel=1e-12)
    assert res["direct"]["mass"] == pytest.approx(0.25, rel=1e-9)


def test_alpha_and_proof_params():
    assert alpha_from_mu3(0.5) == pytest.approx(2.0)
    p = proof_scaling_params(0.5, 0.5)
    # m * a^(1/mu3) = m * c^(-2) = m^2 * b and a b^-2 c^-2 = m
    m = 0.5
    assert m * p.a ** (1.0 / 0.5) == pytest.approx(m * p.c ** -2.0, rel=1e-12)
    assert m * p.a ** (1.0 / 0.5) == pytest.approx(m ** 2 * p.b, rel=1e-12)
    assert p.a * p.b ** -2.0 * p.c ** -2.0 == pytest.approx(m, rel=1e-12)
    assert p.a <= 1.0


def test_scaling_inequality_trivial_at_equal_masses(poly_half):
    rep = scaling_inequality_check(poly_half, 1.0, 1.0, SolverOptions(n=192))
    assert rep["holds"]
    assert rep["margin"] == pytest.approx(0.0, abs=1e-9 * abs(rep["d_m2"]))


def test_scaling_inequality_strict_for_smaller_mu3():
    model = CasimirModel.polytrope(0.75, c=1.0, mu3=0.5)
    rep = scaling_inequality_check(model, 0.5, 1.0, SolverOptions(n=192))
    assert rep["holds"] and rep["proof_holds"]
    assert rep["margin"] >= 1e-4
    assert rep["rescaled_mass"] == pytest.approx(0.5, rel=1e-8)


def test_split_partitions_mass(ss_half):
    rep = split_diagnostic(ss_half, 0.5 * ss_half.support_radius)
    assert rep["interior_mass"] + rep["exterior_mass"] == pytest.approx(
        ss_half.mass, abs=1e-10)
    assert rep["mixed_term"] < 0.0


def test_split_beyond_support(ss_half):
    rep = split_diagnostic(ss_half, 2.0 * ss_half.support_radius)
    assert rep["exterior_mass"] == 0.0
    assert rep["mixed_term"] == 0.0


def test_split_bound_with_generous_constant(ss_half):
    rep = split_diagnostic(ss_half, 0.5 * ss_half.support_radius, C=None)
    rep2 = split_diagnostic(ss_half, 0.5 * ss_half.support_radius,
                            C=2.0 * rep["implied_C"])
    assert rep2["bound_holds"]


def test_bilinearity(ss_half):
    rng = np.random.default_rng(3)
    rho1 = ss_half.rho0.values
    rho2 = rng.random(ss_half.grid.n) * np.max(rho1) * 0.1
    assert bilinearity_check(ss_half.grid, rho1, rho2)["pass"]


def test_lower_bound_calibrated(report_half):
    c_m = calibrate_lower_bound(report_half, 0.5)
    assert c_m > 0.0
    assert lower_bound_check(report_half, c_m, 0.5)["pass"]


def test_interpolation_inequality(ss_half):
    assert interpolation_check(ss_half.grid, ss_half.rho0.values, 0.5)["pass"]


def test_ensemble_matches_steady(poly_wide, ss_wide):
    ens = sample(ss_wide, 400_000, seed=2)
    rep_e = evaluate_ensemble(poly_wide, ens, grid=ss_wide.grid)
    rep_s = evaluate_steady(poly_wide, ss_wide)
    for key in ("mass", "e_kin", "e_pot", "casimir"):
        a, b = getattr(rep_e, key), getattr(rep_s, key)
        assert a == pytest.approx(b, rel=0.02), key


def test_single_particle_zero_epot(poly_wide, ss_wide):
    ens = ParticleEnsemble(np.array([[0.3, 0.0]]), np.array([[0.0, 0.1]]),
                           np.array([1e-6]))
    rep = evaluate_ensemble(poly_wide, ens, grid=ss_wide.grid)
    assert rep.e_pot == 0.0


def test_weight_homogeneity(poly_wide, ss_wide):
    with pytest.warns(UserWarning):
        ens = sample(ss_wide, 500, seed=4)
    doubled = ParticleEnsemble(ens.positions, ens.velocities, 2.0 * ens.weights)
    r1 = evaluate_ensemble(poly_wide, ens, grid=ss_wide.grid)
    r2 = evaluate_ensemble(poly_wide, doubled, grid=ss_wide.grid)
    assert r2.mass == pytest.approx(2.0 * r1.mass, rel=1e-12)
    assert r2.e_kin == pytest.approx(2.0 * r1.e_kin, rel=1e-12)
    assert r2.e_pot == pytest.approx(4.0 * r1.e_pot, rel=1e-9)


def test_empty_ensemble_rejected(poly_wide):
    empty = ParticleEnsemble(np.empty((0, 2)), np.empty((0, 2)), np.empty(0))
    with pytest.raises(InputError):
        evaluate_ensemble(poly_wide, empty)


def test_stability_distance_consistency(poly_wide, ss_wide):
    ens = sample(ss_wide, 200_000, seed=9)
    d, epot_diff = stability_distance(poly_wide, ss_wide, ens)
    rep_e = evaluate_ensemble(poly_wide, ens, grid=ss_wide.grid)
    rep_s = evaluate_steady(poly_wide, ss_wide)
    # D(f) - D(f0) = d + E_pot(rho_f - rho0) within combined tolerances
    lhs = rep_e.d - rep_s.d
    assert lhs == pytest.approx(d + epot_diff, abs=0.02 * abs(rep_s.d))
    # near-exact sample: d small and nonnegative up to Monte-Carlo noise
    assert d >= -0.01 * abs(rep_s.d)
    assert abs(d) < 0.05 * abs(rep_s.d)
