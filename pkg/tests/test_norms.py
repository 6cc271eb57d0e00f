import numpy as np
import pytest

from src.errors import GridMismatch, MissingHistory
from src.geometry import SlabGrid
from src.norms import (AnisotropicWeight, TangentialMultiIndex, anisotropic_norm, embedding_spot_check,
                       energy_layer, energy_layer_sweep, energy_weight_exponent, manufactured_history,
                       manufactured_interface, standard_h_norm, tangential_multi_indices, time_derivative)


@pytest.fixture
def coarse_slab():
    return SlabGrid(d=2, H=20.0, Nh=8, Nv=12)


def test_weight_vanishes_on_interface_and_wall():
    omega = AnisotropicWeight(20.0)
    assert omega(np.array([0.0, 20.0, -20.0])) == pytest.approx([0.0, 0.0, 0.0])
    assert omega(20.0 / np.sqrt(2)) == pytest.approx(20.0 ** 4 / 4)
    assert omega(1.0, order=1) == pytest.approx(2 * 400.0 - 4.0)
    assert omega.table(np.array([1.0]), 4).shape == (5, 1)


def test_multi_index_weight():
    """Plain normal derivatives count twice, everything else once."""
    idx = TangentialMultiIndex((1, 1, 1, 1))
    assert idx.d == 2
    assert idx.weight == 5
    assert str(idx) == "(1,1,1,1)"


@pytest.mark.parametrize("alpha", [(1, -1, 0, 0), (1, 0, 0)])
def test_multi_index_rejects(alpha):
    with pytest.raises(ValueError):
        TangentialMultiIndex(alpha)


def test_multi_index_enumeration():
    all_idx = list(tangential_multi_indices(2, 2))
    assert all(i.weight <= 2 for i in all_idx)
    assert TangentialMultiIndex((0, 0, 1, 0)) in all_idx
    assert all(i.normal == 0 for i in tangential_multi_indices(2, 2, normal=False))


@pytest.mark.parametrize("k, alpha0, l, expected", [(5, 1, 0, 1.5), (1, 0, 0, 0.0), (4, 2, 1, 1.0)])
def test_energy_weight_exponent(k, alpha0, l, expected):
    assert energy_weight_exponent(k, alpha0, l) == expected


def test_time_derivative_of_polynomial():
    dt = 0.1
    levels = [np.array([(dt * j) ** 2]) for j in range(-2, 3)]
    assert time_derivative(levels, 2, dt)[0] == pytest.approx(2.0)
    assert time_derivative(levels, 1, dt)[0] == pytest.approx(0.0, abs=1e-12)


def test_time_derivative_needs_history():
    with pytest.raises(MissingHistory):
        time_derivative([np.zeros(1)] * 4, 1, 0.1)
    with pytest.raises(MissingHistory):
        time_derivative([np.zeros(1)], 2, 0.1)


def test_norm_of_constant(slab_2d):
    """Only the undifferentiated term survives for u = 1."""
    u = np.ones(slab_2d.shape)
    expected = np.sqrt(2 * np.pi * slab_2d.H)
    assert anisotropic_norm(u, slab_2d, 1, 2, static=True) == pytest.approx(expected, rel=1e-8)
    assert standard_h_norm(u, slab_2d, 1, 2) == pytest.approx(expected, rel=1e-8)


def test_norm_argument_checks(slab_2d):
    with pytest.raises(ValueError):
        anisotropic_norm(np.ones(slab_2d.shape), slab_2d, 1, 5, static=True)
    with pytest.raises(GridMismatch):
        anisotropic_norm(np.ones((3, 3)), slab_2d, 1, 2, static=True)


def test_embedding_spot_check(coarse_slab):
    rows = embedding_spot_check(coarse_slab, m=2)
    assert "constant" in rows and "layer_0.02" in rows
    assert rows["constant"]["star_over_full"] == pytest.approx(1.0, rel=1e-8)
    assert all(r["sup_over_star"] > 0 for r in rows.values())


def test_energy_layer_range(coarse_slab, eos_params):
    phases = [manufactured_history(coarse_slab, s) for s in (1, -1)]
    with pytest.raises(ValueError):
        energy_layer(phases, manufactured_interface(coarse_slab), coarse_slab, eos_params, 0.1, l=3)


def test_energy_layers_scale_as_eps_power(coarse_slab, eos_params):
    """With fields held fixed layer l scales like ε^{4l}."""
    phases = [manufactured_history(coarse_slab, s) for s in (1, -1)]
    rows, slopes = energy_layer_sweep(phases, manufactured_interface(coarse_slab), coarse_slab, eos_params, 0.1,
                                      [1.0, 0.5], layers=(0, 1))
    assert len(rows) == 4
    assert slopes[0] == pytest.approx(0.0, abs=1e-8)
    assert slopes[1] == pytest.approx(4.0, abs=1e-8)
    assert all(r["total"] > 0 for r in rows)


def test_manufactured_history_needs_odd_levels(coarse_slab):
    with pytest.raises(MissingHistory):
        manufactured_history(coarse_slab, 1, levels=4)


def test_energy_layer_reports_applied_weights(coarse_slab, eos_params):
    """Base order 4 is the first where the 𝔉_p weight switches on; base order 2 never applies it."""
    deep = [manufactured_history(coarse_slab, s, levels=7) for s in (1, -1)]
    psi = manufactured_interface(coarse_slab, levels=7)
    applied = {}
    for l in (0, 1):
        report = energy_layer(deep, psi, coarse_slab, eos_params, 0.1, l, base_order=4)
        applied.update({(k, a0, ll): e for k, a0, ll, e in report["weights"]})
    assert applied[(4, 0, 0)] == 0.5
    assert applied[(3, 2, 1)] == 0.5
    assert applied[(3, 0, 0)] == 0.0
    assert (4, 0, 1) not in applied
    shallow = energy_layer(deep, psi, coarse_slab, eos_params, 0.1, 1)
    assert shallow["weights"] and all(e == 0.0 for *_, e in shallow["weights"])
