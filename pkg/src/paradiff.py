"""
Littlewood-Paley analysis on the interface torus, Bony paraproducts and the discrete
paradifferential quantization T_a of symbols a(x', ξ).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.errors import AliasingError, GridMismatch
from src.spectral import HorizontalGrid

logger = logging.getLogger(__name__)

COEFF_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Samples of a periodic function on Σ; Fourier coefficients are taken on demand."""
    grid: HorizontalGrid
    values: np.ndarray

    @classmethod
    def from_function(cls, grid: HorizontalGrid, fn: Callable) -> "SpectralField":
        vals = np.asarray(fn(*grid.coords)) * np.ones(grid.shape)
        return cls(grid, vals)

    @classmethod
    def from_coefficients(cls, grid: HorizontalGrid, coeffs: np.ndarray, real: bool = True) -> "SpectralField":
        vals = grid.ifft(coeffs * grid.Nh ** grid.dims)
        return cls(grid, np.real(vals) if real else vals)

    @property
    def coefficients(self) -> np.ndarray:
        """Normalised coefficients û_k with u = Σ û_k e^{ik·x'}."""
        return self.grid.fft(self.values) / self.grid.Nh ** self.grid.dims

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values)

    def mean(self) -> float:
        return complex(self.grid.mean(self.values)) if not self.is_real else float(self.grid.mean(self.values))

    def hs_norm(self, s: float = 0.0) -> float:
        return float(np.sqrt(self.grid.sobolev_norm_sq(self.values, s)))

    def l2_norm(self) -> float:
        return self.hs_norm(0.0)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def hermitian_defect(self) -> float:
        """Relative size of the imaginary part; zero for a real function."""
        if self.is_real:
            return 0.0
        scale = max(float(np.max(np.abs(self.values))), 1e-300)
        return float(np.max(np.abs(self.values.imag))) / scale

    def real(self) -> "SpectralField":
        return SpectralField(self.grid, np.real(self.values))

    def same_grid(self, other: "SpectralField") -> None:
        if self.grid.Nh != other.grid.Nh or self.grid.dims != other.grid.dims:
            raise GridMismatch(f"fields on grids {self.grid.shape} and {other.grid.shape}", "paradiff")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self.same_grid(other)
            return SpectralField(self.grid, self.values + other.values)
        return SpectralField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self.same_grid(other)
            return SpectralField(self.grid, self.values - other.values)
        return SpectralField(self.grid, self.values - other)

    def __mul__(self, c):
        return SpectralField(self.grid, self.values * c)

    __rmul__ = __mul__

    def spectrum_frame(self) -> pd.DataFrame:
        """One row per retained mode: wave numbers, |û|, Re û, Im û."""
        c = self.coefficients
        data = {f"k{j + 1}": k.ravel().astype(int) for j, k in enumerate(self.grid.wavenumbers)}
        data.update({"abs": np.abs(c).ravel(), "re": c.real.ravel(), "im": c.imag.ravel()})
        return pd.DataFrame(data)


def _transition(t) -> np.ndarray:
    """C^∞ step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    g = lambda s: np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    a, b = g(t), g(1.0 - t)
    return a / (a + b)


class PLCutoffs:
    """Dyadic windows Θ, ϑ_k, the low-frequency cutoff ϕ and the bilinear cutoff χ̃(θ, η)."""

    def __init__(self, eps1: float = 0.1, eps2: float = 0.125):
        self.eps1 = float(eps1)
        self.eps2 = float(eps2)
        if not 0 < self.eps1 < self.eps2:
            logger.warning(f"Bilinear cutoff needs 0 < ε1 < ε2, got ε1={self.eps1}, ε2={self.eps2}")

    @property
    def valid(self) -> bool:
        return 0 < self.eps1 < self.eps2 < 1

    @staticmethod
    def Theta(r) -> np.ndarray:
        """1 for r <= 1, 0 for r >= 2."""
        return 1.0 - _transition(np.asarray(r, dtype=float) - 1.0)

    def Theta_k(self, r, k: int) -> np.ndarray:
        if k < 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        return self.Theta(np.asarray(r, dtype=float) / 2.0 ** k)

    def band(self, r, k: int) -> np.ndarray:
        """ϑ_k = Θ_k - Θ_{k-1}, with ϑ_0 = Θ."""
        if k < 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        return self.Theta_k(r, k) - self.Theta_k(r, k - 1)

    def phi(self, r) -> np.ndarray:
        return 1.0 - self.Theta(r)

    def chi_tilde(self, theta_mag, eta_mag) -> np.ndarray:
        theta_mag = np.asarray(theta_mag, dtype=float)
        eta_mag = np.asarray(eta_mag, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(eta_mag > 0, theta_mag / np.where(eta_mag > 0, eta_mag, 1.0), np.inf)
        width = self.eps2 - self.eps1
        if width <= 0:
            return (ratio <= self.eps1).astype(float)
        return 1.0 - _transition((ratio - self.eps1) / width)

    def max_band(self, kmax: float) -> int:
        return int(np.ceil(np.log2(max(kmax, 1.0)))) + 1

    def self_check(self, samples: int = 2000, seed: int = 0) -> Dict[str, float]:
        """Sampled defects of the cutoff properties; all zero for admissible parameters."""
        rng = np.random.default_rng(seed)
        eta = rng.uniform(1.0, 100.0, samples)
        inner = rng.uniform(0.0, self.eps1, samples) * eta
        outer = rng.uniform(self.eps2, 1.0, samples) * eta
        t = rng.uniform(0.5, 4.0, samples)
        mid = rng.uniform(0.0, 1.0, samples) * eta
        r = rng.uniform(0.0, 50.0, samples)
        K = self.max_band(50.0)
        report = {
            "chi_inner": float(np.max(np.abs(self.chi_tilde(inner, eta) - 1.0))),
            "chi_outer": float(np.max(np.abs(self.chi_tilde(outer, eta)))),
            "chi_homogeneity": float(np.max(np.abs(self.chi_tilde(t * mid, t * eta) - self.chi_tilde(mid, eta)))),
            "phi_low": float(np.max(np.abs(self.phi(rng.uniform(0, 1, samples))))),
            "phi_high": float(np.max(np.abs(self.phi(rng.uniform(2, 50, samples)) - 1.0))),
            "partition": float(np.max(np.abs(sum(self.band(r, k) for k in range(K + 1)) - 1.0))),
            "ordered": float(not self.valid),
        }
        return report


def lp_project(u: SpectralField, k: int, cutoffs: Optional[PLCutoffs] = None) -> SpectralField:
    """𝒫_k u with multiplier ϑ_k(ξ); k < 0 gives zero."""
    cutoffs = cutoffs or PLCutoffs()
    mult = cutoffs.band(u.grid.kmag, k)
    return _apply_multiplier(u, mult)


def _apply_multiplier(u: SpectralField, mult: np.ndarray) -> SpectralField:
    out = u.grid.ifft(mult[(...,) + (None,) * (u.values.ndim - u.grid.dims)] * u.grid.fft(u.values))
    return SpectralField(u.grid, np.real(out) if u.is_real else out)


def low_pass(u: SpectralField, j: int, cutoffs: PLCutoffs) -> SpectralField:
    """P_{<=j} u with multiplier Θ_j; zero for j < 0."""
    return _apply_multiplier(u, cutoffs.Theta_k(u.grid.kmag, j))


def lp_decompose(u: SpectralField, cutoffs: Optional[PLCutoffs] = None) -> List[SpectralField]:
    """All dyadic bands 𝒫_0 u, ..., 𝒫_K u; their sum is u."""
    cutoffs = cutoffs or PLCutoffs()
    K = cutoffs.max_band(float(np.max(u.grid.kmag)))
    return [lp_project(u, k, cutoffs) for k in range(K + 1)]


def _check_band_limited(*fields: SpectralField) -> None:
    for f in fields:
        c = f.coefficients
        limit = f.grid.Nh / 4.0
        high = np.zeros(c.shape, dtype=bool)
        for k in f.grid.wavenumbers:
            high |= np.abs(k) >= limit
        scale = max(float(np.max(np.abs(c))), 1e-300)
        if np.max(np.abs(c[high]), initial=0.0) > 1e-12 * scale:
            raise AliasingError("field carries modes at or above Nh/4; products would alias")


def bony_decompose(a: SpectralField, u: SpectralField, cutoffs: Optional[PLCutoffs] = None
                   ) -> Tuple[SpectralField, SpectralField, SpectralField]:
    """(T_a u, T_u a, R(a, u)) with T_a u = Σ_k P_{<=k-3} a 𝒫_k u and R over |k - l| <= 2."""
    cutoffs = cutoffs or PLCutoffs()
    a.same_grid(u)
    _check_band_limited(a, u)
    bands_a = lp_decompose(a, cutoffs)
    bands_u = lp_decompose(u, cutoffs)
    K = len(bands_a) - 1
    zero = np.zeros(np.broadcast(a.values, u.values).shape, dtype=np.result_type(a.values, u.values))
    Tau, Tua, R = zero.copy(), zero.copy(), zero.copy()
    for k in range(K + 1):
        Tau = Tau + low_pass(a, k - 3, cutoffs).values * bands_u[k].values
        Tua = Tua + low_pass(u, k - 3, cutoffs).values * bands_a[k].values
        for l in range(max(0, k - 2), min(K, k + 2) + 1):
            R = R + bands_a[k].values * bands_u[l].values
    return SpectralField(a.grid, Tau), SpectralField(a.grid, Tua), SpectralField(a.grid, R)


def paraproduct(a: SpectralField, u: SpectralField, cutoffs: Optional[PLCutoffs] = None) -> SpectralField:
    return bony_decompose(a, u, cutoffs)[0]


def para_apply(a, u: SpectralField, cutoffs: Optional[PLCutoffs] = None) -> SpectralField:
    """
    T_a u. A SpectralField `a` is a function symbol and gives the Bony paraproduct; any object
    with `sample(grid, eta)` is quantized by the double-Fourier sum
        (T_a u)^(η + θ) += χ̃(θ, η) â(θ, η) ϕ(η) û(η).
    """
    cutoffs = cutoffs or PLCutoffs()
    if isinstance(a, SpectralField):
        return paraproduct(a, u, cutoffs)
    grid = u.grid
    N, n = grid.Nh, grid.dims
    uh = u.coefficients
    weights = cutoffs.phi(grid.kmag) * uh
    scale = max(float(np.max(np.abs(uh))), 1e-300)
    active = np.argwhere(np.abs(weights) > COEFF_FLOOR * scale)
    out = np.zeros(grid.shape, dtype=complex)
    K = grid.wavenumbers
    for idx in map(tuple, active):
        eta = tuple(int(K[j][idx]) for j in range(n))
        eta_mag = float(grid.kmag[idx])
        ah = grid.fft(np.broadcast_to(a.sample(grid, eta), grid.shape)) / N ** n
        w = cutoffs.chi_tilde(grid.kmag, eta_mag) * ah * weights[idx]
        live = np.abs(w) > COEFF_FLOOR * scale * max(float(np.max(np.abs(ah))), 1.0)
        if not np.any(live):
            continue
        targets = [(K[j] + eta[j]).astype(int) for j in range(n)]
        overflow = np.zeros(grid.shape, dtype=bool)
        for t in targets:
            overflow |= np.abs(t) >= N // 2
        if np.any(overflow & live):
            raise AliasingError(f"T_a output at input mode {eta} exceeds the mode cutoff {N // 2}")
        np.add.at(out, tuple(t[live] % N for t in targets), w[live])
    result = SpectralField.from_coefficients(grid, out, real=False)
    if u.is_real:
        defect = result.hermitian_defect()
        if defect > 1e-12:
            logger.warning(f"T_a of a real input has relative imaginary part {defect:.2e}")
        return result.real()
    return result


def _padded(grid: HorizontalGrid, factor: int = 2) -> HorizontalGrid:
    return HorizontalGrid(grid.Nh * factor, grid.dims)


def _resample(f: np.ndarray, src: HorizontalGrid, dst: HorizontalGrid) -> np.ndarray:
    """Spectral interpolation (zero padding or truncation) between periodic grids."""
    c = np.fft.fftshift(src.fft(f) / src.Nh ** src.dims)
    out = np.zeros((dst.Nh,) * dst.dims, dtype=complex)
    lo = (dst.Nh - src.Nh) // 2
    if lo >= 0:
        sl = tuple(slice(lo, lo + src.Nh) for _ in range(src.dims))
        out[sl] = c
    else:
        lo = -lo
        sl = tuple(slice(lo, lo + dst.Nh) for _ in range(src.dims))
        out = c[sl]
    return np.real(dst.ifft(np.fft.ifftshift(out) * dst.Nh ** dst.dims))


def mean_curvature(psi: SpectralField, pad: int = 2) -> SpectralField:
    """ℋ(ψ) = ∇̄·(∇̄ψ / sqrt(1 + |∇̄ψ|²)), evaluated on a padded grid and truncated back."""
    grid = psi.grid
    c = psi.coefficients
    top = np.zeros(c.shape, dtype=bool)
    for k in grid.wavenumbers:
        top |= np.abs(k) > grid.Nh / 3.0
    if np.max(np.abs(c[top]), initial=0.0) > 1e-10 * max(float(np.max(np.abs(c))), 1e-300):
        raise AliasingError("ψ is not resolved: energy in the top third of the spectrum")
    fine = _padded(grid, pad)
    p = _resample(psi.values, grid, fine)
    grads = [fine.diff(p, a) for a in range(grid.dims)]
    root = np.sqrt(1.0 + sum(g ** 2 for g in grads))
    H = sum(fine.diff(g / root, a) for a, g in enumerate(grads))
    return SpectralField(grid, _resample(H, fine, grid))


def zero_freq_project(f: SpectralField) -> SpectralField:
    """𝒫≠0 f = f - (f)_Σ."""
    return SpectralField(f.grid, f.values - f.grid.mean(f.values))


def slope_fit(ks: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(ks)."""
    ks = np.asarray(ks, dtype=float)
    vals = np.maximum(np.asarray(values, dtype=float), 1e-300)
    return float(np.polyfit(np.log(ks), np.log(vals), 1)[0])
