import numpy as np
import pytest

from src.eos import (CallableEos, EosParams, density_from_pressure, derivative_bounds_check, fit_bound_constant,
                     log_density, log_density_p_derivative, pressure, sound_speed_sq)
from src.errors import EosDomainError


def test_pressure_density_inverse(eos_params):
    """density_from_pressure inverts pressure on the admissible box."""
    rho = np.linspace(0.5, 2.0, 7)
    S = np.linspace(-0.5, 0.5, 7)
    state = density_from_pressure(pressure(rho, S, eos_params), S, eos_params)
    assert np.allclose(state.rho, rho, rtol=1e-12)
    assert np.allclose(state.F, np.log(rho), atol=1e-12)


def test_sound_speed_matches_difference_quotient(eos_params):
    rho, S, h = 1.3, 0.2, 1e-6
    fd = (pressure(rho + h, S, eos_params) - pressure(rho - h, S, eos_params)) / (2 * h)
    assert sound_speed_sq(rho, S, eos_params) == pytest.approx(fd, rel=1e-7)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_p_derivative_closed_form(eos_params, k):
    """∂_p^k 𝔉 from the closed form agrees with nested central differences."""
    p, S, h = 0.7, 0.1, 1e-3
    f = lambda x: log_density(x, S, eos_params)
    if k == 1:
        fd = (f(p + h) - f(p - h)) / (2 * h)
    elif k == 2:
        fd = (f(p + h) - 2 * f(p) + f(p - h)) / h ** 2
    else:
        fd = (f(p + 2 * h) - 2 * f(p + h) + 2 * f(p - h) - f(p - 2 * h)) / (2 * h ** 3)
    assert log_density_p_derivative(p, S, eos_params, k) == pytest.approx(fd, rel=1e-4)


def test_density_floor(eos_params):
    with pytest.raises(EosDomainError):
        pressure(np.array([0.05, 1.0]), 0.0, eos_params)
    with pytest.raises(EosDomainError):
        log_density(-2.0, 0.0, eos_params)


def test_derivative_bounds_uniform_in_eps(eos_params):
    """∂_p^k 𝔉 / ε^{2k} does not depend on ε."""
    report = derivative_bounds_check(eos_params)
    assert report["relative_spread"] < 1e-6
    assert len(report["p_ratio"]) == 3


def test_derivative_bounds_order_limit(eos_params):
    with pytest.raises(ValueError):
        derivative_bounds_check(eos_params, k=5)


def test_fit_bound_constant(eos_params):
    """𝔉_p <= A ε² with A = 1/γ at p = 0."""
    A = fit_bound_constant(eos_params, np.array([0.0]), np.array([0.0]), [1.0, 0.1])
    assert A == pytest.approx(1.0 / eos_params.gamma)


def test_callable_eos_matches_polytrope(eos_params):
    """A user law reproduces the built-in polytrope through root finding."""
    law = lambda rho, S: pressure(rho, S, eos_params)
    user = CallableEos(law, rho_floor=0.1, rho_max=100.0)
    p = np.array([-0.3, 0.0, 1.5])
    S = np.zeros(3)
    ref = density_from_pressure(p, S, eos_params)
    got = user.density_from_pressure(p, S)
    assert np.allclose(got.rho, ref.rho, rtol=1e-10)
    assert np.allclose(got.c_s, ref.c_s, rtol=1e-5)
    assert np.allclose(got.F_p, ref.F_p, rtol=1e-5)


def test_callable_eos_out_of_range():
    user = CallableEos(lambda rho, S: rho - 1.0, rho_floor=0.5, rho_max=2.0)
    with pytest.raises(EosDomainError):
        user.density_from_pressure(5.0, 0.0)


def test_with_eps_copies():
    base = EosParams()
    scaled = base.with_eps(0.1)
    assert scaled.eps == 0.1
    assert base.eps == 1.0
