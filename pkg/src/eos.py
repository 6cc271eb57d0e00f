"""
Polytropic equation of state with Mach-number scaling, p = ε^{-2}(ρ^γ e^{S/C_V} - 1),
and the log-density variable 𝔉 = log ρ used by the continuity equation.
"""

import logging
from dataclasses import dataclass
from math import factorial
from typing import Callable, Dict, Iterable, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import brentq

from src.errors import EosDomainError

logger = logging.getLogger(__name__)

MAX_DERIVATIVE_ORDER = 4


class EosParams(BaseModel):
    gamma: float = Field(5.0 / 3.0, gt=1.0)
    cv: float = Field(1.0, gt=0.0)
    eps: float = Field(1.0, gt=0.0)
    rho_floor: float = Field(0.1, gt=0.0)

    def with_eps(self, eps: float) -> "EosParams":
        return self.model_copy(update={"eps": eps})


@dataclass(frozen=True)
class ThermoState:
    rho: np.ndarray
    p: np.ndarray
    S: np.ndarray
    F: np.ndarray
    F_p: np.ndarray
    c_s: np.ndarray


def _check_floor(rho, params: EosParams):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < params.rho_floor):
        raise EosDomainError(f"density {float(np.min(rho)):.4g} below floor {params.rho_floor}")
    return rho


def pressure(rho, S, params: EosParams):
    rho = _check_floor(rho, params)
    return (rho ** params.gamma * np.exp(np.asarray(S) / params.cv) - 1.0) / params.eps ** 2


def sound_speed_sq(rho, S, params: EosParams):
    """∂p/∂ρ at fixed S."""
    rho = np.asarray(rho, dtype=float)
    return params.gamma / params.eps ** 2 * rho ** (params.gamma - 1) * np.exp(np.asarray(S) / params.cv)


def log_density(p, S, params: EosParams):
    """𝔉(p, S) = (1/γ)(log(ε²p + 1) - S/C_V)."""
    arg = params.eps ** 2 * np.asarray(p, dtype=float) + 1.0
    if np.any(arg <= 0):
        raise EosDomainError("pressure below -1/ε² has no density")
    return (np.log(arg) - np.asarray(S) / params.cv) / params.gamma


def log_density_p_derivative(p, S, params: EosParams, k: int = 1):
    """Closed form of ∂_p^k 𝔉."""
    if k < 1:
        raise ValueError("derivative order must be positive")
    arg = params.eps ** 2 * np.asarray(p, dtype=float) + 1.0
    return (-1) ** (k - 1) * factorial(k - 1) * params.eps ** (2 * k) / (params.gamma * arg ** k) + 0 * np.asarray(S)


def log_density_S_derivative(params: EosParams, k: int = 1) -> float:
    return -1.0 / (params.gamma * params.cv) if k == 1 else 0.0


def density_from_pressure(p, S, params: EosParams) -> ThermoState:
    p = np.asarray(p, dtype=float)
    S = np.asarray(S, dtype=float)
    F = log_density(p, S, params)
    rho = np.exp(F)
    if np.any(rho < params.rho_floor):
        raise EosDomainError(f"pressure {float(np.min(p)):.4g} maps below the density floor")
    return ThermoState(rho=rho, p=p, S=S, F=F, F_p=log_density_p_derivative(p, S, params),
                       c_s=np.sqrt(sound_speed_sq(rho, S, params)))


class CallableEos:
    """
    Wraps a user law p(ρ, S) (vectorised, strictly increasing in ρ) behind the same contract
    as the polytropic functions; inversion by bracketed root finding, derivatives by
    central differences.
    """

    def __init__(self, law: Callable, rho_floor: float = 0.1, rho_max: float = 1e6, step: float = 1e-6):
        self.law = law
        self.rho_floor = rho_floor
        self.rho_max = rho_max
        self.step = step

    def pressure(self, rho, S):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < self.rho_floor):
            raise EosDomainError(f"density {float(np.min(rho)):.4g} below floor {self.rho_floor}")
        return self.law(rho, S)

    def _invert(self, p: float, S: float) -> float:
        g = lambda r: self.law(r, S) - p
        lo, hi = self.rho_floor, self.rho_max
        if g(lo) > 0 or g(hi) < 0:
            raise EosDomainError(f"pressure {p:.4g} outside the law's range on [{lo}, {hi}]")
        return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)

    def density_from_pressure(self, p, S) -> ThermoState:
        p = np.atleast_1d(np.asarray(p, dtype=float))
        S = np.broadcast_to(np.asarray(S, dtype=float), p.shape)
        rho = np.array([self._invert(pi, si) for pi, si in zip(p.ravel(), S.ravel())]).reshape(p.shape)
        h = self.step * rho
        dp_drho = (self.law(rho + h, S) - self.law(rho - h, S)) / (2 * h)
        if np.any(dp_drho <= 0):
            raise EosDomainError("law is not strictly increasing in density")
        return ThermoState(rho=rho, p=p, S=S, F=np.log(rho), F_p=1.0 / (rho * dp_drho), c_s=np.sqrt(dp_drho))


def _sample_box(params: EosParams, rho_range, S_range, n: int):
    rho = np.linspace(*rho_range, n)
    S = np.linspace(*S_range, n)
    R, SS = np.meshgrid(rho, S, indexing="ij")
    R = np.maximum(R, params.rho_floor)
    return pressure(R, SS, params), SS


def _fd_p_derivative(params: EosParams, p, S, k: int):
    """k-th central difference of 𝔉 in p with a step scaled by 1/ε²."""
    h = 1e-2 / params.eps ** 2 if k > 1 else 1e-5 / params.eps ** 2
    nodes = np.arange(k + 1) - k / 2.0
    coeffs = np.array([(-1) ** (k - j) * factorial(k) / (factorial(j) * factorial(k - j)) for j in range(k + 1)])
    total = sum(c * log_density(p + x * h, S, params) for c, x in zip(coeffs, nodes))
    return total / h ** k


def derivative_bounds_check(params: EosParams, rho_range=(0.5, 2.0), S_range=(-1.0, 1.0),
                            eps_values: Sequence[float] = (1.0, 0.3, 0.1), k: int = 2,
                            n: int = 9) -> Dict:
    """
    Max over the sample box of |∂_p^k 𝔉|/ε^{2k} (by finite differences) and |∂_S 𝔉| for each ε.
    The box is given in (ρ, S) so that it does not depend on ε.
    """
    if k > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"only derivative orders up to {MAX_DERIVATIVE_ORDER} are supported")
    ratios, s_bounds = [], []
    for eps in eps_values:
        prm = params.with_eps(eps)
        p, S = _sample_box(prm, rho_range, S_range, n)
        d_num = _fd_p_derivative(prm, p, S, k)
        ratios.append(float(np.max(np.abs(d_num))) / eps ** (2 * k))
        hS = 1e-5
        dS = (log_density(p, S + hS, prm) - log_density(p, S - hS, prm)) / (2 * hS)
        s_bounds.append(float(np.max(np.abs(dS))))
    spread = (max(ratios) - min(ratios)) / max(ratios)
    report = {"k": k, "eps": list(eps_values), "p_ratio": ratios, "S_bound": s_bounds,
              "relative_spread": spread}
    logger.debug(f"EOS derivative bounds: {report}")
    return report


def fit_bound_constant(params: EosParams, p, S, eps_values: Iterable[float]) -> float:
    """Smallest A with 𝔉_p <= A ε² over the samples and the ε sweep."""
    A = 0.0
    for eps in eps_values:
        prm = params.with_eps(eps)
        A = max(A, float(np.max(log_density_p_derivative(p, S, prm) / eps ** 2)))
    return A
