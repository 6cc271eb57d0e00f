import numpy as np
import pytest

from src.config import SolverConfig
from src.dtn import (DtNPair, EllipticProblem, dtn_apply, dtn_bilinear_form, dtn_inverse, dtn_symmetry_residual,
                     flat_dtn_multiplier, flat_spectrum, harmonic_extend, paralinearization_residual)
from src.errors import GeometryError, GridMismatch, NotMeanZero
from src.geometry import InterfaceProfile, SlabGrid, build_cutoff, flatten
from src.paradiff import SpectralField
from src.spectral import HorizontalGrid


@pytest.fixture
def flat_pair(flat_profile_2d):
    return DtNPair(flat_profile_2d)


@pytest.fixture
def wavy_pair(wavy_profile_2d):
    return DtNPair(wavy_profile_2d)


def _surface(pair, fn):
    return SpectralField.from_function(pair.plus.grid.horizontal, fn)


def test_flat_multiplier():
    assert flat_dtn_multiplier(0.0, 20.0) == 0.0
    assert flat_dtn_multiplier(3.0, 20.0) == pytest.approx(3.0 * np.tanh(60.0))


@pytest.mark.parametrize("sign", [1, -1])
def test_flat_eigenvalues(flat_pair, sign):
    """On a flat interface cos(k x1) is an eigenfunction with eigenvalue k tanh(Hk)."""
    for row in flat_spectrum(flat_pair, [1, 2, 3], sign=sign):
        assert row["error"] < 1e-6 * row["k"]


def test_total_operator_doubles_flat_symbol(flat_pair):
    f = _surface(flat_pair, lambda x: np.cos(2 * x))
    assert np.allclose(flat_pair.total(f).values, 4.0 * np.tanh(40.0) * f.values, atol=1e-6)
    assert np.allclose(flat_pair.mixed(f).values, 0.0, atol=1e-6)


@pytest.mark.parametrize("sign", [1, -1])
def test_symmetry_on_curved_interface(wavy_pair, sign):
    f = _surface(wavy_pair, np.cos)
    g = _surface(wavy_pair, lambda x: np.cos(x + 0.3) + 0.5 * np.cos(2 * x))
    assert dtn_symmetry_residual(f, g, wavy_pair.op(sign)) < 1e-8


@pytest.mark.parametrize("pair_name", ["flat_pair", "wavy_pair"])
def test_symmetry_of_orthogonal_pair(request, pair_name):
    """Both pairings vanish by parity; round-off must not read as asymmetry."""
    pair = request.getfixturevalue(pair_name)
    f = _surface(pair, np.cos)
    g = _surface(pair, lambda x: np.sin(x) + 0.5 * np.cos(2 * x))
    assert dtn_symmetry_residual(f, g, pair.plus) < 1e-8
    assert dtn_symmetry_residual(f, g, pair.minus) < 1e-8


def test_constant_extends_to_constant(flat_pair):
    ext = harmonic_extend(_surface(flat_pair, lambda x: 1.0 + 0.0 * x), flat_pair.plus.problem)
    assert np.allclose(ext.values, 1.0, atol=1e-8)


def test_bilinear_form_matches_pairing(flat_pair):
    """∫ E∇u·∇u over the phase equals ∫_Σ f 𝔑f."""
    op = flat_pair.plus
    f = _surface(flat_pair, np.cos)
    pairing = op.grid.horizontal.integrate(op(f).values * f.values)
    assert dtn_bilinear_form(f, f, op) == pytest.approx(pairing, rel=1e-6)


def test_inverse_on_flat_interface(flat_pair):
    h = _surface(flat_pair, lambda x: np.cos(2 * x))
    g = dtn_inverse(h, flat_pair)
    assert np.allclose(g.values, h.values / (4.0 * np.tanh(40.0)), atol=1e-6)
    assert abs(g.mean()) < 1e-12


def test_inverse_on_curved_interface(wavy_pair):
    h = _surface(wavy_pair, lambda x: np.sin(x) - 0.3 * np.cos(3 * x))
    g = wavy_pair.inverse(h)
    assert np.allclose(wavy_pair.total(g).values, h.values, atol=1e-6)


def test_inverse_needs_mean_zero(flat_pair):
    with pytest.raises(NotMeanZero) as err:
        dtn_inverse(_surface(flat_pair, lambda x: 1.0 + np.cos(x)), flat_pair)
    assert err.value.mean == pytest.approx(1.0)


def test_surface_shape_checked(flat_pair):
    wrong = SpectralField.from_function(HorizontalGrid(16, 1), np.cos)
    with pytest.raises(GridMismatch):
        dtn_apply(wrong, flat_pair.plus)


def test_problem_needs_flattened_profile(slab_2d):
    prof = InterfaceProfile.from_function(slab_2d, lambda x1: 0.0 * x1)
    with pytest.raises(GeometryError):
        EllipticProblem(prof, 1)


def test_coefficients_uniformly_elliptic(wavy_pair):
    assert wavy_pair.plus.problem.min_coefficient_eigenvalue() > 0.5


def test_paralinearization_gains_an_order():
    """𝔑 - T_Λ is one order smoother than 𝔑 itself, unless the residual is already at the solver floor."""
    grid = SlabGrid(d=2, H=20.0, Nh=64, Nv=96)
    profile = flatten(InterfaceProfile.from_function(grid, lambda x1: 0.2 * np.sin(x1)), build_cutoff(grid.H, 0.2))
    psi = SpectralField(grid.horizontal, profile.psi)
    solver = SolverConfig()
    report = paralinearization_residual(DtNPair(profile, solver), psi, (4, 8, 16), floor=solver.accept)
    assert report["dtn_slope"] == pytest.approx(1.0, abs=0.1)
    assert report["gain"] >= 1.0 or report["floor_met"]
    assert len(report["residual_norms"]) == 3


def test_paralinearization_floor_flag(flat_pair):
    """On a flat interface the residual vanishes, so only the floor can carry the verdict."""
    psi = SpectralField(flat_pair.plus.grid.horizontal, np.zeros(flat_pair.plus.grid.horizontal.shape))
    assert paralinearization_residual(flat_pair, psi, (2, 4, 8), floor=1e-5)["floor_met"]
    assert not paralinearization_residual(flat_pair, psi, (2, 4, 8), floor=-1.0)["floor_met"]
