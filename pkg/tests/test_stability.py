import numpy as np
import pytest

from src.errors import CollinearFields, GridMismatch, StabilityViolated
from src.stability import (BulkState, TwoPhaseTrace, check_stability_2d, check_stability_3d, classify_subsonic_2d,
                           ellipticity_form, ellipticity_form_2d, ellipticity_matrix, hyperbolicity_check,
                           localizer, mu_margin_check, quotient_convention_report, recover_interface_gradient,
                           secondary_symmetrize_residual, solve_mu_2d, solve_mu_3d, speeds)


def _line_trace(v_plus, v_minus, b_plus=1.0, b_minus=1.0, cs=np.inf):
    return TwoPhaseTrace.from_arrays(1.0, 1.0, np.array([v_plus]), np.array([v_minus]),
                                     np.array([b_plus]), np.array([b_minus]), cs, cs)


def test_speeds_incompressible_and_compressible():
    """a = sqrt(ρ) without compressibility, sqrt(ρ(1 + c_A²/c_s²)) with it."""
    trace = TwoPhaseTrace.from_arrays(4.0, 1.0, np.array([0.0, 0.0]), np.array([0.0, 0.0]),
                                      np.array([2.0, 0.0]), np.array([0.0, 1.0]), np.inf, 2.0)
    sp = speeds(trace)
    assert sp.cA_plus[0] == pytest.approx(1.0)
    assert sp.a_plus[0] == pytest.approx(2.0)
    assert sp.a_minus[0] == pytest.approx(np.sqrt(1.25))


def test_sampled_stable_traces_hold(stable_traces):
    report = check_stability_3d(stable_traces, 0.1)
    assert report.holds
    assert report.margin_upper >= 0
    assert report.margin_lower >= 0


def test_sampled_violations_fail_everywhere(violating_traces):
    report = check_stability_3d(violating_traces, 0.1)
    assert not report.holds
    assert np.all((report.pointwise_upper < 0) | (report.pointwise_lower < 0))


def test_stability_implies_ellipticity(stable_traces):
    """The quadratic form is positive wherever the condition holds."""
    report = ellipticity_form(stable_traces)
    assert report.infimum > 0
    assert np.all(np.linalg.eigvalsh(ellipticity_matrix(stable_traces))[..., 0] > 0)


def test_violations_lose_ellipticity(violating_traces):
    eig = np.linalg.eigvalsh(ellipticity_matrix(violating_traces))[..., 0]
    assert np.all(eig < 0)
    report = ellipticity_form(violating_traces)
    assert report.infimum < 0
    assert report.closed_form <= report.infimum + 1e-12
    assert np.linalg.norm(report.direction) == pytest.approx(1.0)


def test_mu_satisfies_jump_identity(stable_traces):
    mu = solve_mu_3d(stable_traces)
    scale = max(1.0, float(np.max(np.abs(stable_traces.jump_v))))
    assert mu.jump_residual < 1e-10 * scale
    assert mu_margin_check(stable_traces, mu, 0.1) <= 1e-12


def test_mu_quotient_orientation(stable_traces):
    """The solved μ matches the quotient taken over b⁻ × b⁺."""
    mu = solve_mu_3d(stable_traces)
    report = quotient_convention_report(stable_traces, mu)
    assert report["agreeing_denominator"] == "b- x b+"
    assert report["errors"]["b- x b+"] < 1e-8


def test_hyperbolicity_follows_from_stability(stable_traces):
    report = hyperbolicity_check(stable_traces, solve_mu_3d(stable_traces))
    assert report["agree"]
    assert report["hyperbolic"]
    assert np.all(report["min_eig_plus"] >= 0.1 - 1e-9)


def test_collinear_fields_rejected():
    trace = TwoPhaseTrace.from_arrays(1.0, 1.0, np.array([0.2, 0.0]), np.array([0.0, 0.0]),
                                      np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    with pytest.raises(CollinearFields):
        solve_mu_3d(trace)


@pytest.mark.parametrize("delta0", [0.0, 0.2, -0.1])
def test_delta0_range(stable_traces, delta0):
    with pytest.raises(StabilityViolated):
        check_stability_3d(stable_traces, delta0)


def test_wide_delta0_allowed(stable_traces):
    report = check_stability_3d(stable_traces, 0.5, allow_wide=True)
    assert report.delta0 == 0.5


def test_dimension_mismatch(stable_traces, kh_trace):
    with pytest.raises(GridMismatch):
        check_stability_2d(stable_traces, 0.1)
    with pytest.raises(GridMismatch):
        solve_mu_3d(kh_trace)


def test_two_dimensional_stable_layer():
    """|[v1]| = 0.5 is well inside |b1⁺|/a⁺ + |b1⁻|/a⁻ = 2."""
    trace = _line_trace(0.25, -0.25)
    report = check_stability_2d(trace, 0.1)
    assert report.holds
    assert report.margin_upper == pytest.approx(2.0 - 1.1 * 0.5)
    assert report.extra["subsonic_plus"] and report.extra["subsonic_minus"]
    mu = solve_mu_2d(trace)
    assert mu.mu_plus[0] == pytest.approx(0.25)
    assert mu.mu_minus[0] == pytest.approx(-0.25)
    assert mu.jump_residual < 1e-14


def test_two_dimensional_violation():
    trace = _line_trace(1.5, -1.5)
    assert not check_stability_2d(trace, 0.1).holds
    with pytest.raises(StabilityViolated):
        solve_mu_2d(trace)


def test_subsonic_threshold_compressible():
    """With c_A = c_s = 1 the threshold is 1/sqrt(2)."""
    report = classify_subsonic_2d(_line_trace(0.4, -0.4, cs=1.0))
    assert report["threshold_plus"] == pytest.approx(1 / np.sqrt(2))
    assert report["relative_speed"] == pytest.approx(0.4)
    assert report["subsonic_plus"]
    assert not classify_subsonic_2d(_line_trace(0.8, -0.8, cs=1.0))["subsonic_minus"]


def test_kelvin_helmholtz_is_not_elliptic(kh_trace):
    assert not check_stability_2d(kh_trace, 0.1).holds
    assert ellipticity_form_2d(kh_trace)[0] == pytest.approx(-0.5)
    assert ellipticity_form(kh_trace).infimum == pytest.approx(-0.5)


def test_recover_interface_gradient(rng):
    b_plus = rng.normal(size=(2, 10))
    b_minus = np.stack([-b_plus[1], b_plus[0]]) + 0.1 * rng.normal(size=(2, 10))
    grad = rng.normal(size=(2, 10))
    b3_plus = np.einsum("i...,i...->...", b_plus, grad)
    b3_minus = np.einsum("i...,i...->...", b_minus, grad)
    assert np.allclose(recover_interface_gradient(b_plus, b_minus, b3_plus, b3_minus), grad)
    with pytest.raises(CollinearFields):
        recover_interface_gradient(b_plus, 2 * b_plus, b3_plus, b3_minus)


def test_localizer_support():
    eta = localizer(np.array([0.0, 0.5, 1.0, -2.0]), delta1=1.0)
    assert eta[0] == pytest.approx(1.0)
    assert 0 < eta[1] < 1
    assert eta[2] == 0.0 and eta[3] == 0.0


def test_secondary_symmetrization_combination(wavy_profile_2d, slab_2d, eos_params):
    """Term-by-term residuals equal the combinations of the original equations."""
    x1, x3 = slab_2d.coords(1)
    decay = np.exp(-0.1 * np.abs(x3))
    state = BulkState(
        sign=1,
        v=np.stack([0.3 * np.cos(x1) * decay, 0.1 * np.sin(x1) * decay]),
        b=np.stack([1.0 + 0.2 * np.sin(x1) * decay, 0.5 * np.cos(x1) * decay]),
        p=0.2 * np.cos(x1) * decay,
        S=np.zeros(slab_2d.shape),
        v_t=np.stack([0.05 * np.sin(x1) * decay, np.zeros(slab_2d.shape)]),
        b_t=np.zeros((2,) + slab_2d.shape),
        p_t=0.01 * np.sin(x1) * decay,
        phi_t=wavy_profile_2d.phi_t(1),
    )
    mu = 0.3 * np.ones(slab_2d.shape)
    report = secondary_symmetrize_residual(state, wavy_profile_2d, mu, eos=eos_params)
    scale = max(1.0, report["original_momentum"], report["original_induction"])
    assert report["combination_gap"] < 1e-10 * scale
    assert report["orthogonality"] < 1e-10 * scale
    with pytest.raises(GridMismatch):
        secondary_symmetrize_residual(state, wavy_profile_2d, mu[:2], eos=None)


def test_density_floor_is_inclusive():
    """ρ equal to the floor is admissible; anything below it, or a vanishing density, is rejected."""
    at_floor = TwoPhaseTrace.from_arrays(0.3, 0.5, np.array([0.1]), np.array([-0.1]), np.array([1.0]),
                                         np.array([1.0]))
    at_floor.validate(rho_floor=0.3)
    with pytest.raises(StabilityViolated):
        at_floor.validate(rho_floor=0.3 + 1e-12)
    with pytest.raises(StabilityViolated):
        TwoPhaseTrace.from_arrays(0.0, 0.5, np.array([0.1]), np.array([-0.1]), np.array([1.0]), np.array([1.0]))
