import numpy as np
import pytest

from src.errors import DegenerateJacobian, GeometryError, GridMismatch, UnsupportedDerivative
from src.geometry import (BulkField, CovariantCalculus, InterfaceProfile, SlabGrid, TangentialDerivative,
                          build_cutoff, covariant_divergence, covariant_grad, flatten, good_unknown_residual,
                          transport_identity_check)


@pytest.mark.parametrize("kwargs", [{"H": 10.0}, {"d": 4}, {"Nh": 2}])
def test_slab_rejects_bad_parameters(kwargs):
    with pytest.raises(GeometryError):
        SlabGrid(**kwargs)


def test_slab_quadrature_volume(slab_3d):
    """Each phase has volume (2π)² H."""
    for sign in (1, -1):
        assert slab_3d.volume(sign) == pytest.approx((2 * np.pi) ** 2 * slab_3d.H, rel=1e-10)


def test_vertical_derivative_of_polynomial(slab_2d):
    """Chebyshev differentiation through the stretched map is exact on low-degree polynomials."""
    for sign in (1, -1):
        x1, x3 = slab_2d.coords(sign)
        f = x3 ** 3 - 2 * x3
        assert np.max(np.abs(slab_2d.d3(f, sign) - (3 * x3 ** 2 - 2))) < 1e-6 * np.max(np.abs(3 * x3 ** 2))


def test_cutoff_properties():
    """On a deep slab χ = 1 near Σ, vanishes at the walls, slope below 1/(ψ0 + 20)."""
    chi = build_cutoff(80.0, 0.5)
    assert chi(np.array([0.0, 0.5, -1.0])) == pytest.approx([1.0, 1.0, 1.0])
    assert chi(np.array([80.0, -80.0])) == pytest.approx([0.0, 0.0], abs=1e-12)
    assert chi.sup_derivative(1) <= 1.0 / 20.5 + 1e-12
    assert chi.amplitude == 1.0


def test_cutoff_exact_at_the_wall():
    """χ reaches zero exactly at ±H and stays continuous where the evaluation switches halves."""
    chi = build_cutoff(80.0, 1.0)
    assert chi.amplitude == 1.0
    assert np.all(chi(np.array([80.0, -80.0, 100.0])) == 0.0)
    mid = 1.0 + 0.5 * chi.layer
    near = chi(np.array([mid - 1e-9, mid, mid + 1e-9]))
    assert np.max(np.abs(np.diff(near))) < 1e-9
    assert chi(np.array([mid]))[0] == pytest.approx(0.5, abs=1e-10)
    for order in range(1, 9):
        assert np.all(chi(np.array([80.0, -80.0]), order) == 0.0)


def test_cutoff_thin_slab_warns(caplog):
    """A slab too thin for the slope bound keeps χ(±H) > 0 and says so."""
    chi = build_cutoff(10.5, 1.0)
    assert chi.amplitude < 1.0
    assert chi(np.array([10.5]))[0] == pytest.approx(1.0 - chi.amplitude)
    assert "cannot bring χ to zero" in caplog.text


@pytest.mark.parametrize("H, psi0", [(8.0, 0.5), (20.0, 1.5), (20.0, -0.1)])
def test_cutoff_rejects(H, psi0):
    with pytest.raises(GeometryError):
        build_cutoff(H, psi0)


def test_cutoff_derivative_order_limit():
    chi = build_cutoff(20.0, 0.1)
    with pytest.raises(UnsupportedDerivative):
        chi(np.array([2.0]), order=9)


def test_flatten_interface_values(wavy_profile_2d):
    """φ = x3 + ψ on Σ and the Jacobian stays near one for small ψ."""
    for sign in (1, -1):
        geo = wavy_profile_2d.phase(sign)
        assert np.allclose(geo.phi[..., 0], wavy_profile_2d.psi)
        assert geo.jacobian.min() > 0.9


def test_flatten_rejects_large_amplitude(slab_2d):
    prof = InterfaceProfile.from_function(slab_2d, lambda x1: 10.0 * np.sin(x1))
    with pytest.raises(GeometryError):
        flatten(prof, build_cutoff(slab_2d.H, 1.0))


def test_flatten_degenerate_jacobian(slab_2d):
    """A safety factor above the attainable Jacobian raises with the minimum attached."""
    prof = InterfaceProfile.from_function(slab_2d, lambda x1: 0.9 * np.sin(x1))
    with pytest.raises(DegenerateJacobian) as err:
        flatten(prof, build_cutoff(slab_2d.H, 0.9), safety=2.0)
    assert err.value.min_jacobian < 1.0


def test_flatten_grid_mismatch(slab_2d):
    prof = InterfaceProfile.from_function(slab_2d, lambda x1: 0.0 * x1)
    with pytest.raises(GridMismatch):
        flatten(prof, build_cutoff(30.0, 0.1))


def test_covariant_gradient_of_physical_height(wavy_profile_2d):
    """∇^φ of φ itself is the unit vertical vector."""
    for sign in (1, -1):
        phi = wavy_profile_2d.phase(sign).phi
        grad = covariant_grad(BulkField(phi, sign), wavy_profile_2d).values
        assert np.max(np.abs(grad[0])) < 1e-5
        assert np.max(np.abs(grad[-1] - 1.0)) < 1e-5


def test_divergence_of_constant_field(wavy_profile_2d, slab_2d):
    for sign in (1, -1):
        v = BulkField(np.stack([np.full(slab_2d.shape, 0.3), np.full(slab_2d.shape, -0.2)]), sign)
        assert np.max(np.abs(covariant_divergence(v, wavy_profile_2d).values)) < 1e-8


def test_calculus_needs_flattened_profile(slab_2d):
    prof = InterfaceProfile.from_function(slab_2d, lambda x1: 0.0 * x1)
    with pytest.raises(GeometryError):
        CovariantCalculus(prof, 1)


def test_transport_identities_small_residuals():
    """Transport, Reynolds and IBP identities close on a moving interface."""
    grid = SlabGrid(d=2, H=20.0, Nh=32, Nv=48)
    dt, rate = 1e-4, 0.1
    cutoff = build_cutoff(grid.H, 0.2)
    profiles = [flatten(InterfaceProfile.from_function(grid, lambda x1, t=t: rate * t * np.sin(x1),
                                                       lambda x1: rate * np.sin(x1)), cutoff)
                for t in (1.0 - dt, 1.0, 1.0 + dt)]
    f, g, v = [], [], []
    for t in (1.0 - dt, 1.0, 1.0 + dt):
        x1, x3 = grid.coords(1)
        f.append(BulkField((1.0 + 0.3 * np.sin(x1 - t)) * np.cos(0.1 * x3), 1))
        g.append(BulkField(np.exp(-0.01 * x3 ** 2) * (1.0 + 0.2 * np.cos(x1 + t)), 1))
        v.append(BulkField(np.stack([0.2 * np.cos(x1) * np.ones_like(x3),
                                     0.05 * np.sin(x1 + t) * np.exp(-0.05 * x3)]), 1))
    report = transport_identity_check(f, g, v, profiles, dt)
    scale = max(1.0, report["scale"])
    for key in ("transport_residual", "reynolds_residual", "ibp_residual"):
        assert report[key] / scale < 1e-5


def test_transport_needs_three_levels(wavy_profile_2d, slab_2d):
    f = BulkField(np.ones(slab_2d.shape), 1)
    with pytest.raises(GridMismatch):
        transport_identity_check([f, f], [f, f], [f, f], [wavy_profile_2d] * 2, 1e-3)


@pytest.mark.parametrize("factors", [(), ("x1", "x1", "w"), ("x3",)])
def test_tangential_derivative_rejects(factors):
    with pytest.raises(UnsupportedDerivative):
        TangentialDerivative(factors)


def test_x2_missing_in_2d(wavy_profile_2d, slab_2d):
    f = BulkField(np.ones(slab_2d.shape), 1)
    with pytest.raises(UnsupportedDerivative):
        good_unknown_residual(f, wavy_profile_2d, TangentialDerivative(("x2",)))


@pytest.mark.parametrize("factors", [("x1",), ("w",), ("x1", "w")])
def test_good_unknown_residual_small(wavy_profile_2d, slab_2d, factors):
    """The good-unknown identity holds to discretization error on a resolved field."""
    x1, x3 = slab_2d.coords(1)
    f = BulkField(np.sin(x1) * np.cos(0.5 * x3) * np.exp(-0.05 * x3), 1)
    scale = 1.0 if "w" not in factors else 1e4
    assert good_unknown_residual(f, wavy_profile_2d, TangentialDerivative(factors)) < 1e-4 * scale
