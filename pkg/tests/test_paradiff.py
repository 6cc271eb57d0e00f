import numpy as np
import pytest

from src.errors import AliasingError, GridMismatch
from src.paradiff import (PLCutoffs, SpectralField, bony_decompose, lp_decompose, mean_curvature, para_apply,
                          slope_fit, zero_freq_project)
from src.spectral import HorizontalGrid


class ConstantSymbol:
    """a(x', ξ) = c, quantized through the double-Fourier sum."""

    def __init__(self, c=1.0):
        self.c = c

    def sample(self, grid, eta):
        return np.full(grid.shape, self.c)


class FrequencySymbol:
    """a(x', ξ) = |ξ|."""

    def sample(self, grid, eta):
        return np.full(grid.shape, float(np.sqrt(sum(e ** 2 for e in eta))))


def _band_limited(grid, rng, kmax=6):
    coeffs = np.zeros(grid.shape, dtype=complex)
    for k in range(1, kmax + 1):
        c = rng.normal() + 1j * rng.normal()
        coeffs[k], coeffs[-k] = c, np.conj(c)
    return SpectralField.from_coefficients(grid, coeffs)


def test_cutoff_self_check(cutoffs):
    """Every sampled cutoff property holds to round-off."""
    report = cutoffs.self_check()
    for key, value in report.items():
        assert value < 1e-12, key


def test_unordered_cutoffs_flagged(caplog):
    cut = PLCutoffs(0.2, 0.1)
    assert not cut.valid
    assert cut.self_check()["ordered"] == 1.0
    assert "needs 0 < ε1 < ε2" in caplog.text


def test_band_windows(cutoffs):
    r = np.array([0.0, 0.5, 1.0, 2.0, 3.0])
    assert np.allclose(cutoffs.Theta(r), [1.0, 1.0, 1.0, 0.0, 0.0])
    assert np.allclose(cutoffs.band(r, -1), 0.0)
    assert np.allclose(cutoffs.phi(np.array([0.5, 4.0])), [0.0, 1.0])


def test_lp_decompose_sums_to_field(line_grid, rng, cutoffs):
    u = SpectralField(line_grid, rng.normal(size=line_grid.shape))
    bands = lp_decompose(u, cutoffs)
    total = sum(b.values for b in bands)
    assert np.allclose(total, u.values, atol=1e-12)


def test_bony_reconstructs_product(line_grid, rng, cutoffs):
    """T_a u + T_u a + R(a, u) = a u for band-limited inputs."""
    a, u = _band_limited(line_grid, rng), _band_limited(line_grid, rng)
    Tau, Tua, R = bony_decompose(a, u, cutoffs)
    assert np.allclose(Tau.values + Tua.values + R.values, a.values * u.values, atol=1e-12)


def test_bony_rejects_aliasing(line_grid, cutoffs):
    a = SpectralField.from_function(line_grid, lambda x: np.cos(x))
    u = SpectralField.from_function(line_grid, lambda x: np.cos(10 * x))
    with pytest.raises(AliasingError):
        bony_decompose(a, u, cutoffs)


def test_grid_mismatch(line_grid):
    a = SpectralField.from_function(line_grid, np.cos)
    b = SpectralField.from_function(HorizontalGrid(16, 1), np.cos)
    with pytest.raises(GridMismatch):
        a + b


def test_quantized_constant_symbol_is_identity_on_high_modes(line_grid, cutoffs):
    """T_1 u = u once every mode of u lies where ϕ = 1."""
    u = SpectralField.from_function(line_grid, lambda x: np.cos(3 * x) + np.sin(5 * x))
    out = para_apply(ConstantSymbol(), u, cutoffs)
    assert np.allclose(out.values, u.values, atol=1e-12)
    low = SpectralField.from_function(line_grid, lambda x: np.cos(x))
    assert np.allclose(para_apply(ConstantSymbol(), low, cutoffs).values, 0.0, atol=1e-12)


def test_quantized_frequency_symbol(line_grid, cutoffs):
    u = SpectralField.from_function(line_grid, lambda x: np.cos(4 * x))
    out = para_apply(FrequencySymbol(), u, cutoffs)
    assert np.allclose(out.values, 4.0 * u.values, atol=1e-12)


def test_para_apply_function_symbol_is_paraproduct(line_grid, rng, cutoffs):
    a, u = _band_limited(line_grid, rng), _band_limited(line_grid, rng)
    assert np.allclose(para_apply(a, u, cutoffs).values, bony_decompose(a, u, cutoffs)[0].values)


def test_mean_curvature_of_graph(psi_line):
    """ℋ(ψ) = ψ''/(1 + ψ'²)^{3/2} for a curve."""
    x = psi_line.grid.coords[0]
    exact = -0.2 * np.sin(x) / (1.0 + (0.2 * np.cos(x)) ** 2) ** 1.5
    assert np.allclose(mean_curvature(psi_line).values, exact, atol=1e-10)


def test_mean_curvature_unresolved(line_grid):
    psi = SpectralField.from_function(line_grid, lambda x: 0.01 * np.cos(12 * x))
    with pytest.raises(AliasingError):
        mean_curvature(psi)


def test_zero_freq_project(line_grid):
    f = SpectralField.from_function(line_grid, lambda x: 2.0 + np.cos(x))
    assert zero_freq_project(f).mean() == pytest.approx(0.0, abs=1e-14)


def test_slope_fit():
    ks = np.array([2.0, 4.0, 8.0, 16.0])
    assert slope_fit(ks, 3.0 * ks ** 2) == pytest.approx(2.0)


def test_spectrum_frame(psi_line):
    frame = psi_line.spectrum_frame()
    assert list(frame.columns) == ["k1", "abs", "re", "im"]
    assert len(frame) == 32
    assert frame.loc[frame.k1 == 1, "abs"].iloc[0] == pytest.approx(0.1)
