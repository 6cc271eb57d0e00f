import numpy as np
import pytest
import sympy as sp

from src.errors import GridMismatch, UnsupportedDerivative
from src.paradiff import PLCutoffs, SpectralField
from src.spectral import HorizontalGrid
from src.symbols import (PsiJets, Symbol, curvature_factorization_residual, curvature_paralinearization,
                         homogeneity_residual, jet_variables, real_to_real_residual, sample_points, symbol_adjoint,
                         symbol_compose, symbol_curvature, symbol_dtn, symbol_dtn_total, symbol_symmetrizers,
                         symmetrization_operator_residual, symmetrization_residual, x_derivative)


@pytest.fixture
def jets(psi_line):
    return PsiJets.from_field(psi_line)


def test_jets_match_analytic_derivatives(jets, psi_line):
    x = psi_line.grid.coords[0]
    assert np.allclose(jets.values["q1"], 0.2 * np.cos(x))
    assert np.allclose(jets.values["r11"], -0.2 * np.sin(x))
    assert np.allclose(jets.values["s111"], -0.2 * np.cos(x))


def test_flat_interface_symbols(line_grid):
    """On ψ = 0 the Dirichlet-Neumann symbol is |ξ| and the curvature symbol |ξ|²."""
    flat = SpectralField.from_function(line_grid, lambda x: 0.0 * x)
    xi = [np.array([-3.0, 0.5, 2.0])]
    index = np.array([0, 5, 9])
    p, s = symbol_dtn(flat, -1).evaluate(xi, index=index)
    assert np.allclose(p, np.abs(xi[0]))
    assert np.allclose(s, 0.0)
    p, s = symbol_curvature(flat).evaluate(xi, index=index)
    assert np.allclose(p, xi[0] ** 2)
    assert np.allclose(s, 0.0)


@pytest.mark.parametrize("build", [lambda p: symbol_dtn(p, 1), lambda p: symbol_dtn(p, -1), symbol_curvature,
                                   lambda p: symbol_symmetrizers(p)[0], lambda p: symbol_symmetrizers(p)[1],
                                   lambda p: symbol_symmetrizers(p)[2]])
def test_principal_parts_are_homogeneous(psi_line, jets, build):
    sym = build(psi_line)
    index, xi = sample_points(jets, 200, seed=3)
    assert homogeneity_residual(sym, index, xi) < 1e-10


def test_symmetrizer_orders(psi_line):
    m, n, big_m = symbol_symmetrizers(psi_line, s=4.0)
    assert (m.order, n.order, big_m.order) == (1.5, 0.0, 3.5)
    with pytest.raises(ValueError):
        symbol_symmetrizers(psi_line, s=1.0)


def test_symmetrization_holds_to_two_orders(psi_line):
    """𝔫#(Λ#𝔥) and (𝔪#𝔪)#𝔫 agree in both retained orders."""
    report = symmetrization_residual(psi_line, count=200, seed=1)
    assert report["order3"] < 1e-10
    assert report["order2"] < 1e-10
    assert report["re_m05"] < 1e-10
    assert report["samples"] == 200


def test_curvature_factorization(psi_line):
    assert curvature_factorization_residual(psi_line, count=200) < 1e-12


def test_compose_multipliers():
    """|ξ| # |ξ| = |ξ|² with no sub-principal part."""
    absxi = Symbol.from_xi(lambda xi: sp.sqrt(xi[0] ** 2), 1, 1)
    out = symbol_compose(absxi, absxi)
    assert out.order == 2
    p, s = out.evaluate([np.array([2.0, -3.0])])
    assert np.allclose(p, [4.0, 9.0])
    assert np.allclose(s, 0.0)


def test_x_derivative_chain_rule():
    v = jet_variables(1)
    assert sp.simplify(x_derivative(v.q[0] ** 2, 0, 1) - 2 * v.q[0] * v.r[(0, 0)]) == 0
    with pytest.raises(UnsupportedDerivative):
        x_derivative(v.s[(0, 0, 0)], 0, 1)


def test_symbol_without_jets_rejected():
    v = jet_variables(1)
    sym = Symbol(1, v.q[0] * v.xi[0], 0, 1)
    assert sym.depends_on_x
    with pytest.raises(GridMismatch):
        sym.evaluate([np.array([1.0])])


def test_sample_table_rows(psi_line, jets):
    index, xi = sample_points(jets, 5, seed=0)
    rows = symbol_dtn(psi_line, 1).sample_table(index, xi)
    assert len(rows) == 5
    assert set(rows[0]) == {"point", "xi", "principal", "sub"}
    assert 0.5 <= abs(rows[0]["xi"][0]) <= 4.0


def test_total_dtn_symbol_maps_real_to_real(psi_line, cutoffs):
    u = SpectralField.from_function(psi_line.grid, lambda x: np.cos(3 * x))
    assert real_to_real_residual(symbol_dtn_total(psi_line), u, cutoffs) < 1e-10


def test_symbol_grid_mismatch(psi_line):
    with pytest.raises(GridMismatch):
        symbol_curvature(psi_line).sample(HorizontalGrid(16, 1), (1,))


def test_adjoint_of_real_multiplier():
    """A real x'-independent multiplier is its own adjoint."""
    a = Symbol.from_xi(lambda xi: xi[0] ** 2, 2, 1)
    xi = [np.array([-2.0, 0.5, 3.0])]
    p, s = symbol_adjoint(a).evaluate(xi)
    assert np.allclose(p, xi[0] ** 2)
    assert np.allclose(s, 0.0)


def test_adjoint_of_variable_coefficient_symbol(jets):
    """(ψ'ξ)* picks up -iψ'' at order zero, and taking the adjoint twice gives the symbol back."""
    v = jet_variables(1)
    a = Symbol(1, v.q[0] * v.xi[0], 0, 1, jets)
    index = np.array([0, 7, 19])
    xi = [np.array([1.5, -2.0, 3.0])]
    p, s = symbol_adjoint(a).evaluate(xi, index=index)
    assert np.allclose(p, jets.values["q1"][index] * xi[0])
    assert np.allclose(s, -1j * jets.values["r11"][index])
    p2, s2 = symbol_adjoint(symbol_adjoint(a)).evaluate(xi, index=index)
    assert np.allclose(p2, p)
    assert np.allclose(s2, 0.0)


def test_operator_symmetrization_gains_an_order():
    """T_𝔫T_ΛT_𝔥 - T_𝔪T_𝔪T_𝔫 is at least one order below T_𝔫T_ΛT_𝔥."""
    grid = HorizontalGrid(512, 1)
    psi = SpectralField.from_function(grid, lambda x: 0.2 * np.sin(x))
    report = symmetrization_operator_residual(psi, (32, 64, 128), PLCutoffs())
    assert report["gain"] >= 1.0
    assert report["residual_slope"] < report["term_slope"]


def test_curvature_paralinearization_gains_an_order():
    grid = HorizontalGrid(256, 1)
    psi = SpectralField.from_function(grid, lambda x: 0.2 * np.sin(x))
    report = curvature_paralinearization(psi, (16, 32, 64), cutoffs=PLCutoffs())
    assert report["gain"] >= 1.0
    assert len(report["main"]) == len(report["remainder"]) == 3
