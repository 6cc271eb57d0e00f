"""
The interface evolution equation: q-wave sources and the q_w problem, resolution of the
pressure traces through 𝔑̃^{-1}, assembly of (ρ⁺+ρ⁻)∂t²ψ, and a frozen-coefficient
paralinearized stepper with the energies ℰ, ℰ̃.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from src.config import SolverConfig
from src.dtn import DtNPair, EllipticProblem
from src.eos import EosParams, log_density_p_derivative
from src.errors import CFLViolation, GeometryError, GridMismatch, MissingHistory
from src.geometry import BulkField, CovariantCalculus, InterfaceProfile, PSI_SUP_LIMIT
from src.norms import time_derivative
from src.paradiff import PLCutoffs, SpectralField, mean_curvature, para_apply, zero_freq_project
from src.spectral import HorizontalGrid
from src.stability import EllipticityReport, TwoPhaseTrace, ellipticity_form
from src.symbols import Symbol, symbol_curvature, symbol_dtn_total, symbol_symmetrizers

logger = logging.getLogger(__name__)

DEFAULT_CFL = 0.5
STEPS_PER_PERIOD = 64


@dataclass(frozen=True, eq=False)
class InterfaceState:
    """ψ and ∂tψ on Σ at time t; `psi_tt` is the lagged ∂t²ψ used inside the remainder."""
    psi: SpectralField
    psi_t: SpectralField
    t: float = 0.0
    sigma: float = 0.0
    psi_tt: Optional[SpectralField] = None

    def __post_init__(self):
        if not (self.psi.is_real and self.psi_t.is_real):
            raise GridMismatch("interface state must be real-valued", "interface_evolution")
        self.psi.same_grid(self.psi_t)
        if self.psi.sup() >= PSI_SUP_LIMIT:
            raise GeometryError(f"sup|ψ| = {self.psi.sup():.3f} must stay below {PSI_SUP_LIMIT}")
        if self.sigma < 0:
            raise ValueError("surface tension must be non-negative")

    @property
    def grid(self) -> HorizontalGrid:
        return self.psi.grid

    def lagged_psi_tt(self) -> SpectralField:
        if self.psi_tt is not None:
            return self.psi_tt
        return SpectralField(self.grid, np.zeros(self.grid.shape))


@dataclass(frozen=True, eq=False)
class EffectiveCoefficients:
    """𝐰, 𝐮, 𝐛± = b±/√ρ± and the densities, vectors with components first."""
    w: np.ndarray
    u: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    trace: TwoPhaseTrace

    @property
    def rho_total(self) -> np.ndarray:
        return self.rho_plus + self.rho_minus

    @property
    def dims(self) -> int:
        return self.w.shape[0]

    def b(self, sign: int) -> np.ndarray:
        return self.b_plus if sign > 0 else self.b_minus

    def rho(self, sign: int) -> np.ndarray:
        return self.rho_plus if sign > 0 else self.rho_minus

    def is_constant(self, tol: float = 1e-12) -> bool:
        arrays = (self.w, self.u, self.b_plus, self.b_minus)
        vec = all(np.ptp(a.reshape(a.shape[0], -1), axis=1).max() <= tol for a in arrays)
        return vec and np.ptp(self.rho_plus) <= tol and np.ptp(self.rho_minus) <= tol

    def quadratic_form(self, z: np.ndarray) -> np.ndarray:
        """ρ⁺|𝐛⁺·z|² + ρ⁻|𝐛⁻·z|² - (ρ⁺+ρ⁻)|𝐮·z|², pointwise."""
        dot = lambda a: np.einsum("i...,i...->...", a, z)
        return self.rho_plus * dot(self.b_plus) ** 2 + self.rho_minus * dot(self.b_minus) ** 2 \
            - self.rho_total * dot(self.u) ** 2

    def on(self, grid: HorizontalGrid) -> "EffectiveCoefficients":
        """The same coefficients broadcast over a Σ grid."""
        if self.dims != grid.dims:
            raise GridMismatch(f"coefficients have {self.dims} components, grid has {grid.dims} axes",
                               "interface_evolution")
        # single-point traces carry a trailing axis of length one
        point = lambda a: a.reshape(a.shape[:-1] + (1,) * grid.dims) if a.shape[-1:] == (1,) else a
        vec = lambda a: np.broadcast_to(point(a), (a.shape[0],) + grid.shape).copy()
        scal = lambda a: np.broadcast_to(point(np.atleast_1d(a)), grid.shape).copy()
        return EffectiveCoefficients(vec(self.w), vec(self.u), vec(self.b_plus), vec(self.b_minus),
                                     scal(self.rho_plus), scal(self.rho_minus), self.trace)

    def constants(self) -> Dict[str, np.ndarray]:
        mean_vec = lambda a: a.reshape(a.shape[0], -1).mean(axis=1)
        return {"w": mean_vec(self.w), "u": mean_vec(self.u), "b_plus": mean_vec(self.b_plus),
                "b_minus": mean_vec(self.b_minus), "rho_plus": float(np.mean(self.rho_plus)),
                "rho_minus": float(np.mean(self.rho_minus))}


def effective_coefficients(trace: TwoPhaseTrace) -> EffectiveCoefficients:
    trace.validate()
    rp, rm = trace.rho_plus, trace.rho_minus
    total = rp + rm
    w = (rp * trace.v_plus + rm * trace.v_minus) / total
    u = np.sqrt(rp * rm) / total * trace.jump_v
    return EffectiveCoefficients(w, u, trace.b_plus / np.sqrt(rp), trace.b_minus / np.sqrt(rm), rp, rm, trace)


# ---------------------------------------------------------------------------
# q-wave source and the q_w problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WaveInputs:
    """
    One phase of (v, b, p, S) with the time derivatives the source needs, at fixed flattened x.
    φ_t and φ_tt enter through the transport velocity W of D_t.
    """
    sign: int
    v: np.ndarray
    b: np.ndarray
    p: np.ndarray
    S: np.ndarray
    v_t: np.ndarray
    b_t: np.ndarray
    p_t: np.ndarray
    b_tt: np.ndarray
    p_tt: np.ndarray
    phi_t: np.ndarray
    phi_tt: np.ndarray

    @classmethod
    def from_history(cls, sign: int, v: Sequence[np.ndarray], b: Sequence[np.ndarray], p: Sequence[np.ndarray],
                     S: np.ndarray, phi: Sequence[np.ndarray], dt: float) -> "WaveInputs":
        """Centred differences over three (or more, odd) time levels; the middle one is evaluated."""
        for name, hist in (("v", v), ("b", b), ("p", p), ("phi", phi)):
            if len(hist) < 3:
                raise MissingHistory(f"D_t² needs three time levels of {name}, got {len(hist)}")
        mid = lambda h: np.asarray(h[len(h) // 2])
        return cls(sign=sign, v=mid(v), b=mid(b), p=mid(p), S=np.asarray(S),
                   v_t=time_derivative(v, 1, dt), b_t=time_derivative(b, 1, dt), p_t=time_derivative(p, 1, dt),
                   b_tt=time_derivative(b, 2, dt), p_tt=time_derivative(p, 2, dt),
                   phi_t=time_derivative(phi, 1, dt), phi_tt=time_derivative(phi, 2, dt))

    @classmethod
    def static(cls, sign: int, v: np.ndarray, b: np.ndarray, p: np.ndarray, S: np.ndarray) -> "WaveInputs":
        zero = np.zeros_like(np.asarray(p, dtype=float))
        zv = np.zeros_like(np.asarray(v, dtype=float))
        return cls(sign, np.asarray(v, dtype=float), np.asarray(b, dtype=float), np.asarray(p, dtype=float),
                   np.asarray(S, dtype=float), zv, zv.copy(), zero, zv.copy(), zero.copy(), zero.copy(), zero.copy())


@dataclass
class WaveSource:
    field: BulkField
    parts: Dict[str, np.ndarray]


@dataclass
class WaveSourceData:
    """q_w on one phase and its trace flux 𝐍·∇^φ q_w on Σ."""
    sign: int
    q_w: BulkField
    normal_flux: SpectralField
    iterations: int = 0
    residual: float = 0.0


def _transport_rate(calc: CovariantCalculus, inp: WaveInputs) -> List[np.ndarray]:
    """∂t W for W = (v̄, (v·𝐍 - φ_t)/J), with 𝐍_t = (-∂̄φ_t, 0) and J_t = ∂3φ_t."""
    grid, g, d = calc.grid, calc.geo, calc.d
    N_t = [-grid.d_h(inp.phi_t, a) for a in range(d - 1)] + [np.zeros_like(inp.phi_t)]
    J_t = calc.d3(inp.phi_t)
    vN = sum(inp.v[i] * g.normal[i] for i in range(d))
    vN_t = sum(inp.v_t[i] * g.normal[i] + inp.v[i] * N_t[i] for i in range(d))
    W3 = (vN - inp.phi_t) / g.jacobian
    W3_t = (vN_t - inp.phi_tt - W3 * J_t) / g.jacobian
    return [inp.v_t[a] for a in range(d - 1)] + [W3_t]


def _material_second(calc: CovariantCalculus, W, W_t, f, f_t, f_tt) -> np.ndarray:
    """D_t² f = f_tt + W_t·∂f + 2W·∂f_t + W·∂(W·∂f)."""
    return f_tt + calc.advect(W_t, f) + 2.0 * calc.advect(W, f_t) + calc.advect(W, calc.advect(W, f))


def _gradient_contraction(calc: CovariantCalculus, a: np.ndarray) -> np.ndarray:
    """Σ_ij (∂^φ_i a_j)(∂^φ_j a_i)."""
    grad = np.stack([calc.grad(a[j]) for j in range(calc.d)])      # [j, i] = ∂^φ_i a_j
    return np.einsum("ji...,ij...->...", grad, grad)


def wave_source(inp: WaveInputs, geo: InterfaceProfile, eos: Optional[EosParams] = None) -> WaveSource:
    """
    -𝔉_p D_t²q + 𝔉_p D_t²(|b|²/2) + (∂^φ_i v_j)(∂^φ_j v_i) - (∂^φ_i b_j)(∂^φ_j b_i), q = p + |b|²/2.
    `eos=None` is the incompressible limit 𝔉_p = 0.
    """
    calc = CovariantCalculus(geo, inp.sign)
    grid = geo.grid
    if inp.p.shape != grid.shape or inp.v.shape != (grid.d,) + grid.shape:
        raise GridMismatch(f"wave inputs of shape {inp.p.shape} do not match grid {grid.shape}",
                           "interface_evolution")
    W = calc.transport_velocity(inp.v, inp.phi_t)
    W_t = _transport_rate(calc, inp)

    mag = 0.5 * np.einsum("i...,i...->...", inp.b, inp.b)
    mag_t = np.einsum("i...,i...->...", inp.b, inp.b_t)
    mag_tt = np.einsum("i...,i...->...", inp.b_t, inp.b_t) + np.einsum("i...,i...->...", inp.b, inp.b_tt)
    q, q_t, q_tt = inp.p + mag, inp.p_t + mag_t, inp.p_tt + mag_tt

    F_p = np.zeros(grid.shape) if eos is None else log_density_p_derivative(inp.p, inp.S, eos)
    parts = {
        "pressure_wave": -F_p * _material_second(calc, W, W_t, q, q_t, q_tt),
        "magnetic_wave": F_p * _material_second(calc, W, W_t, mag, mag_t, mag_tt),
        "velocity": _gradient_contraction(calc, inp.v),
        "magnetic": -_gradient_contraction(calc, inp.b),
    }
    total = sum(parts.values())
    logger.debug(f"Wave source (phase {inp.sign:+d}): " +
                 ", ".join(f"{k}={float(np.max(np.abs(v))):.3e}" for k, v in parts.items()))
    return WaveSource(BulkField(total, inp.sign), parts)


def solve_qw(source: WaveSource, geo: InterfaceProfile, solver: Optional[SolverConfig] = None) -> WaveSourceData:
    """-Δ^φ q_w = source with q_w = 0 on Σ and zero conormal flux on the wall."""
    sign = source.field.sign
    prob = EllipticProblem(geo, sign, solver)
    res = prob.solve(0.0, source=-source.field.values)
    flux = prob.calc.conormal(res.values)[..., 0]
    return WaveSourceData(sign, BulkField(res.values, sign), SpectralField(geo.grid.horizontal, flux),
                          res.iterations, res.residual)


# ---------------------------------------------------------------------------
# Interface forcing, trace resolution and the right side of the ψ equation
# ---------------------------------------------------------------------------

def _trace_field(a: np.ndarray, grid: HorizontalGrid, vector: bool) -> np.ndarray:
    shape = ((a.shape[0],) if vector else ()) + grid.shape
    return np.broadcast_to(a, shape)


def _hessian_contract(grid: HorizontalGrid, a: np.ndarray, c: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Σ_ij a_i c_j ∂̄_i∂̄_j f."""
    out = np.zeros(grid.shape)
    for i in range(grid.dims):
        fi = grid.diff(f, i)
        for j in range(grid.dims):
            out = out + a[i] * c[j] * grid.diff(fi, j)
    return out


def _directional(grid: HorizontalGrid, a: np.ndarray, f: np.ndarray) -> np.ndarray:
    return sum(a[i] * grid.diff(f, i) for i in range(grid.dims))


def _check_trace(trace: TwoPhaseTrace, grid: HorizontalGrid) -> None:
    if trace.dims != grid.dims:
        raise GridMismatch(f"trace has {trace.dims} tangential components, Σ has {grid.dims} axes",
                           "interface_evolution")


def second_order_term(trace: TwoPhaseTrace, sign: int, psi: SpectralField) -> SpectralField:
    """(b̄ᵢb̄ⱼ - ρv̄ᵢv̄ⱼ)∂̄ᵢ∂̄ⱼψ for one phase."""
    grid = psi.grid
    _check_trace(trace, grid)
    b = _trace_field(trace.b(sign), grid, True)
    v = _trace_field(trace.v_plus if sign > 0 else trace.v_minus, grid, True)
    rho = _trace_field(trace.rho(sign), grid, False)
    vals = _hessian_contract(grid, b, b, psi.values) - rho * _hessian_contract(grid, v, v, psi.values)
    return SpectralField(grid, vals)


def interface_forcing(trace: TwoPhaseTrace, sign: int, state: InterfaceState,
                      qw: Optional[WaveSourceData] = None) -> SpectralField:
    """𝔉_ψ± = -𝐍·∇^φ q_w± + (b̄b̄ - ρv̄v̄):∂̄∂̄ψ - 2ρ(v̄·∇̄)ψ_t."""
    grid = state.grid
    v = _trace_field(trace.v_plus if sign > 0 else trace.v_minus, grid, True)
    rho = _trace_field(trace.rho(sign), grid, False)
    out = second_order_term(trace, sign, state.psi).values - 2.0 * rho * _directional(grid, v, state.psi_t.values)
    if qw is not None:
        if qw.normal_flux.values.shape != grid.shape:
            raise GridMismatch("q_w flux lives on a different Σ grid", "interface_evolution")
        out = out - qw.normal_flux.values
    return SpectralField(grid, out)


@dataclass
class TraceResolution:
    q_plus: SpectralField
    q_minus: SpectralField
    jump_defect: float
    constant: float

    def to_dict(self) -> Dict:
        return {"jump_defect": self.jump_defect, "constant": self.constant,
                "q_plus_sup": self.q_plus.sup(), "q_minus_sup": self.q_minus.sup()}


def resolve_traces(state: InterfaceState, trace: TwoPhaseTrace, ops: DtNPair,
                   forcing: Dict[int, SpectralField]) -> TraceResolution:
    """
    q±|_Σ = 𝔑̃^{-1}(±𝔑∓(σℋ(ψ)) + 𝒫≠0([ρ]ψ_tt - [𝔉_ψ])), normalised so that (q⁻)_Σ = 0.
    The jump [q] then equals σℋ(ψ); its mean-free defect is reported.
    """
    grid = state.grid
    _check_trace(trace, grid)
    sigma = state.sigma
    curvature = mean_curvature(state.psi) * sigma if sigma > 0 else SpectralField(grid, np.zeros(grid.shape))
    rho_jump = _trace_field(trace.rho_plus - trace.rho_minus, grid, False)
    core = zero_freq_project(SpectralField(grid, rho_jump * state.lagged_psi_tt().values)
                             - (forcing[1] - forcing[-1]))
    q_minus = ops.inverse(zero_freq_project(core - ops.plus(curvature)))
    q_plus = ops.inverse(zero_freq_project(core + ops.minus(curvature)))
    constant = float(grid.mean(curvature.values))
    q_plus = SpectralField(grid, q_plus.values + constant)
    defect = zero_freq_project(q_plus - q_minus - curvature).sup()
    logger.debug(f"Trace resolution: jump defect {defect:.2e}, constant {constant:.2e}")
    return TraceResolution(q_plus, q_minus, defect, constant)


@dataclass
class RhsAssembly:
    """(ρ⁺+ρ⁻)∂t²ψ and its named groups."""
    total: SpectralField
    groups: Dict[str, SpectralField]
    forcing: Dict[int, SpectralField] = field(default_factory=dict)

    def norms(self) -> Dict[str, float]:
        return {name: g.sup() for name, g in self.groups.items()}


def rho_coupling_term(ops: DtNPair, rho_jump, psi_tt: SpectralField) -> SpectralField:
    """(𝔑⁺ - 𝔑⁻)𝔑̃^{-1}(𝒫≠0([ρ]∂t²ψ))."""
    grid = psi_tt.grid
    jump = np.broadcast_to(np.asarray(rho_jump, dtype=float), grid.shape)
    return ops.mixed(ops.inverse(zero_freq_project(SpectralField(grid, jump * psi_tt.values))))


def assemble_rhs(state: InterfaceState, coeffs: EffectiveCoefficients, ops: DtNPair,
                 qw: Optional[Dict[int, WaveSourceData]] = None) -> RhsAssembly:
    """
    (ρ⁺+ρ⁻)ψ_tt = (σ/2)(𝔑⁺+𝔑⁻)ℋ(ψ) + Σ±(b̄b̄ - ρv̄v̄):∂̄∂̄ψ - 2(ρ⁺v̄⁺+ρ⁻v̄⁻)·∇̄ψ_t
                  - Σ± 𝐍·∇^φ q_w± + Ψ^R,
    Ψ^R = (σ/2)(𝔑⁺-𝔑⁻)𝔑̃^{-1}(𝔑⁺-𝔑⁻)ℋ(ψ) - (𝔑⁺-𝔑⁻)𝔑̃^{-1}𝒫≠0[𝔉_ψ - ρψ_tt],
    with ψ_tt inside Ψ^R taken from `state.psi_tt`.
    """
    trace = coeffs.trace
    grid = state.grid
    _check_trace(trace, grid)
    qw = qw or {}
    zero = SpectralField(grid, np.zeros(grid.shape))
    sigma = state.sigma

    groups: Dict[str, SpectralField] = {}
    if sigma > 0:
        H = mean_curvature(state.psi)
        groups["surface_tension"] = ops.total(H) * (sigma / 2.0)
        tension_remainder = ops.mixed(ops.inverse(zero_freq_project(ops.mixed(H)))) * (sigma / 2.0)
    else:
        groups["surface_tension"] = zero
        tension_remainder = zero
    groups["second_order"] = second_order_term(trace, 1, state.psi) + second_order_term(trace, -1, state.psi)
    momentum = _trace_field(trace.rho_plus * trace.v_plus + trace.rho_minus * trace.v_minus, grid, True)
    groups["convection"] = SpectralField(grid, -2.0 * _directional(grid, momentum, state.psi_t.values))
    flux = sum((qw[s].normal_flux.values for s in qw), np.zeros(grid.shape))
    groups["qw_normal"] = SpectralField(grid, -flux)

    forcing = {s: interface_forcing(trace, s, state, qw.get(s)) for s in (1, -1)}
    psi_tt = state.lagged_psi_tt().values
    rho_p = _trace_field(trace.rho_plus, grid, False)
    rho_m = _trace_field(trace.rho_minus, grid, False)
    jump = SpectralField(grid, (forcing[1].values - rho_p * psi_tt) - (forcing[-1].values - rho_m * psi_tt))
    groups["remainder"] = tension_remainder - ops.mixed(ops.inverse(zero_freq_project(jump)))

    total = zero
    for g in groups.values():
        total = total + g
    logger.debug("RHS groups: " + ", ".join(f"{k}={v.sup():.3e}" for k, v in groups.items()))
    return RhsAssembly(total, groups, forcing)


def iterate_psi_tt(state: InterfaceState, coeffs: EffectiveCoefficients, ops: DtNPair,
                   qw: Optional[Dict[int, WaveSourceData]] = None, refreshes: int = 1
                   ) -> Tuple[InterfaceState, List[float]]:
    """Fixed-point refresh of the lagged ψ_tt; returns the updated state and the update sizes."""
    updates = []
    rho = np.broadcast_to(coeffs.rho_total, state.grid.shape)
    for _ in range(refreshes):
        rhs = assemble_rhs(state, coeffs, ops, qw)
        new = SpectralField(state.grid, rhs.total.values / rho)
        updates.append((new - state.lagged_psi_tt()).sup())
        state = InterfaceState(state.psi, state.psi_t, state.t, state.sigma, new)
    return state, updates


# ---------------------------------------------------------------------------
# Normal modes
# ---------------------------------------------------------------------------

def capillary_multiplier(k: np.ndarray, H: Optional[float] = None, cutoffs: Optional[PLCutoffs] = None,
                         form: str = "paradiff") -> np.ndarray:
    """
    The surface-tension symbol per unit σ: |k|³ϕ(|k|)² for the flat paralinearized operator
    (σ/2)T_ΛT_𝔥, or |k|³tanh(H|k|) for the flat (σ/2)(𝔑⁺+𝔑⁻)ℋ.
    """
    k = np.asarray(k, dtype=float)
    if form == "paradiff":
        return k ** 3 * (cutoffs or PLCutoffs()).phi(k) ** 2
    if form == "dtn":
        if H is None:
            raise ValueError("the DtN form needs the slab depth H")
        return k ** 3 * np.tanh(H * k)
    raise ValueError(f"unknown capillary form {form!r}")


def dispersion_relation(coeffs: EffectiveCoefficients, k: Sequence[float], sigma: float,
                        H: Optional[float] = None, form: str = "paradiff",
                        cutoffs: Optional[PLCutoffs] = None) -> Dict:
    """
    Normal modes ψ ∝ e^{i(k·x - ωt)} of the constant-coefficient equation:
        ω = 𝐰·k ± sqrt((σ S(k) + Σ±ρ±(𝐛±·k)²)/(ρ⁺+ρ⁻) - (𝐮·k)²).
    """
    if not coeffs.is_constant():
        logger.warning("Dispersion relation evaluated on the mean of non-constant coefficients")
    c = coeffs.constants()
    k = np.asarray(k, dtype=float)
    if k.shape != c["w"].shape:
        raise GridMismatch(f"wave vector has {k.size} components, coefficients have {c['w'].size}",
                           "interface_evolution")
    kmag = float(np.linalg.norm(k))
    rho = c["rho_plus"] + c["rho_minus"]
    tension = sigma * float(capillary_multiplier(kmag, H, cutoffs, form))
    magnetic = c["rho_plus"] * float(c["b_plus"] @ k) ** 2 + c["rho_minus"] * float(c["b_minus"] @ k) ** 2
    disc = (tension + magnetic) / rho - float(c["u"] @ k) ** 2
    drift = float(c["w"] @ k)
    root = np.sqrt(complex(disc))
    return {"k": [float(x) for x in k], "discriminant": disc, "drift": drift,
            "omega_plus": drift + root, "omega_minus": drift - root,
            "frequency": float(np.sqrt(max(disc, 0.0))), "growth_rate": float(np.sqrt(max(-disc, 0.0))),
            "stable": disc >= 0, "form": form}


# ---------------------------------------------------------------------------
# Frozen paralinearized operators and the stepper
# ---------------------------------------------------------------------------

class FrozenParaOperator:
    """
    T_{a_1}...T_{a_r} for symbols frozen at one interface, tabulated column by column on the
    Fourier basis of a grid. Input modes are limited to |η| <= kmax so that no stage aliases.
    """

    def __init__(self, chain: Sequence[Symbol], grid: HorizontalGrid, cutoffs: Optional[PLCutoffs] = None):
        self.grid = grid
        self.cutoffs = cutoffs or PLCutoffs()
        self.tags = [s.tag for s in chain]
        growth = (1.0 + self.cutoffs.eps2) ** len(chain)
        self.kmax = float(np.floor((grid.Nh / 2.0 - 1.0) / growth))
        n = grid.Nh ** grid.dims
        self.matrix = np.zeros((n, n), dtype=complex)
        columns = np.flatnonzero((grid.kmag <= self.kmax).ravel())
        for col in columns:
            e = np.zeros(n, dtype=complex)
            e[col] = 1.0
            u = SpectralField.from_coefficients(grid, e.reshape(grid.shape), real=False)
            for sym in reversed(chain):
                u = para_apply(sym, u, self.cutoffs)
            self.matrix[:, col] = u.coefficients.ravel()
        logger.debug(f"Tabulated T_{'T_'.join(self.tags)} on {len(columns)} modes (kmax={self.kmax:g})")

    def __call__(self, values: np.ndarray) -> np.ndarray:
        g = self.grid
        n = g.Nh ** g.dims
        c = g.fft(values).ravel() / n
        out = (self.matrix @ c).reshape(g.shape)
        return np.real(g.ifft(out * n))


class EnergyOperators:
    """T_𝔐T_𝔫, T_𝔪 and the capillary operator T_ΛT_𝔥, all frozen at a background ψ."""

    def __init__(self, background: SpectralField, s: float = 4.0, cutoffs: Optional[PLCutoffs] = None,
                 capillary: bool = True):
        m, nn, big_m = symbol_symmetrizers(background, s)
        self.s = s
        self.grid = background.grid
        self.MN = FrozenParaOperator([big_m, nn], self.grid, cutoffs)
        self.m = FrozenParaOperator([m], self.grid, cutoffs)
        self.capillary = None
        if capillary:
            self.capillary = FrozenParaOperator([symbol_dtn_total(background), symbol_curvature(background)],
                                                self.grid, cutoffs)

    @property
    def kmax(self) -> float:
        ks = [self.MN.kmax, self.m.kmax] + ([self.capillary.kmax] if self.capillary else [])
        return min(ks)


def energy_functionals(state: InterfaceState, coeffs: EffectiveCoefficients, sigma: Optional[float] = None,
                       s: float = 4.0, operators: Optional[EnergyOperators] = None,
                       cutoffs: Optional[PLCutoffs] = None) -> Tuple[float, float]:
    """
    ℰ = ½∫(ρ⁺+ρ⁻)|(∂t + 𝐰·∇̄)Z|² + ¼∫|√σ T_𝔪 Z|²,
    ℰ̃ = ½∫ρ⁺(|𝐛⁺·∇̄Z|² - |𝐮·∇̄Z|²) + ρ⁻(|𝐛⁻·∇̄Z|² - |𝐮·∇̄Z|²),  Z = T_𝔐T_𝔫ψ.
    Symbols come from `operators` when given, otherwise from the current ψ.
    """
    sigma = state.sigma if sigma is None else sigma
    ops = operators or EnergyOperators(state.psi, s, cutoffs, capillary=False)
    return _energies(state.psi.values, state.psi_t.values, coeffs.on(state.grid), sigma, ops)


def _energies(psi: np.ndarray, psi_t: np.ndarray, c: EffectiveCoefficients, sigma: float,
              ops: EnergyOperators) -> Tuple[float, float]:
    grid = ops.grid
    Z = ops.MN(psi)
    Z_t = ops.MN(psi_t)
    grad = np.stack([grid.diff(Z, a) for a in range(grid.dims)])
    transport = Z_t + np.einsum("i...,i...->...", c.w, grad)
    energy = 0.5 * grid.integrate(c.rho_total * transport ** 2)
    if sigma > 0:
        energy += 0.25 * sigma * grid.integrate(ops.m(Z) ** 2)
    energy_tilde = 0.5 * grid.integrate(c.quadratic_form(grad))
    return float(energy), float(energy_tilde)


def ellipticity_direction(coeffs: EffectiveCoefficients) -> Dict:
    """
    Minimising direction of the ℰ̃ quadratic form from the effective coefficients, cross-checked
    against the stability module's form on the underlying traces.
    """
    flat = lambda a: a.reshape(a.shape[0], -1)
    b_p, b_m, u = flat(coeffs.b_plus), flat(coeffs.b_minus), flat(coeffs.u)
    n = max(b_p.shape[1], u.shape[1])
    rp = np.broadcast_to(np.ravel(coeffs.rho_plus), (n,))
    rm = np.broadcast_to(np.ravel(coeffs.rho_minus), (n,))
    outer = lambda a: np.einsum("in,jn->nij", np.broadcast_to(a, (a.shape[0], n)), np.broadcast_to(a, (a.shape[0], n)))
    M = rp[:, None, None] * outer(b_p) + rm[:, None, None] * outer(b_m) - (rp + rm)[:, None, None] * outer(u)
    w, V = np.linalg.eigh(M)
    point = int(np.argmin(w[:, 0]))
    direction = V[point, :, 0]
    if direction[-1] < 0:
        direction = -direction
    report: EllipticityReport = ellipticity_form(coeffs.trace)
    agree = abs(float(w[point, 0]) - report.closed_form) <= 1e-10 * max(1.0, abs(report.closed_form))
    return {"infimum": float(w[point, 0]), "direction": [float(x) for x in direction], "point": point,
            "stability_infimum": report.closed_form, "stability_direction": report.to_dict()["direction"],
            "agree": bool(agree)}


@dataclass
class Trajectory:
    times: List[float]
    amplitudes: List[complex]
    energy: List[float]
    energy_tilde: List[float]
    norms: List[float]
    mode: Tuple[int, ...]
    dt: float
    steps: int = 0
    blew_up: bool = False
    final: Optional[InterfaceState] = None

    def to_frame(self) -> pd.DataFrame:
        amp = np.asarray(self.amplitudes)
        return pd.DataFrame({"t": self.times, "energy": self.energy, "energy_tilde": self.energy_tilde,
                             "amp_re": amp.real, "amp_im": amp.imag, "amp_abs": np.abs(amp),
                             "l2_norm": self.norms})


def cfl_limit(grid: HorizontalGrid, coeffs: EffectiveCoefficients, sigma: float, cfl: float = DEFAULT_CFL) -> float:
    """cfl·min(Δx^{3/2}/√σ, Δx/max|𝐰, 𝐛±, 𝐮|)."""
    dx = 2 * np.pi / grid.Nh
    bounds = []
    if sigma > 0:
        bounds.append(dx ** 1.5 / np.sqrt(sigma))
    speed = sum(float(np.max(np.linalg.norm(a, axis=0))) for a in (coeffs.w, coeffs.u)) \
        + max(float(np.max(np.linalg.norm(coeffs.b_plus, axis=0))), float(np.max(np.linalg.norm(coeffs.b_minus, axis=0))))
    if speed > 0:
        bounds.append(dx / speed)
    if not bounds:
        return np.inf
    return cfl * min(bounds)


def _dominant_mode(psi: SpectralField) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Grid index and wave vector of the largest non-zero mode with a positive leading component."""
    grid = psi.grid
    c = np.abs(psi.coefficients)
    c[(0,) * grid.dims] = 0.0
    positive = np.zeros(grid.shape, dtype=bool)
    for k in reversed(grid.wavenumbers):
        positive = np.where(k != 0, k > 0, positive)
    c = np.where(positive, c, 0.0)
    idx = np.unravel_index(int(np.argmax(c)), grid.shape)
    return tuple(int(i) for i in idx), tuple(int(k[idx]) for k in grid.wavenumbers)


def step_linearized(state: InterfaceState, coeffs: EffectiveCoefficients, sigma: Optional[float] = None,
                    dt: Optional[float] = None, n_steps: Optional[int] = None, t_end: Optional[float] = None,
                    cfl: float = DEFAULT_CFL, blowup_factor: float = 1e3, record_every: int = 1,
                    operators: Optional[EnergyOperators] = None, cutoffs: Optional[PLCutoffs] = None,
                    s: float = 4.0) -> Trajectory:
    """
    Classical RK4 for the frozen-coefficient paralinearized equation
        (ρ⁺+ρ⁻)ψ_tt = -(σ/2)T_ΛT_𝔥ψ - (ρ⁺+ρ⁻)𝐰𝐰:∇̄∇̄ψ - 2(ρ⁺+ρ⁻)𝐰·∇̄ψ_t + Σ±ρ±(𝐛±𝐛± - 𝐮𝐮):∇̄∇̄ψ.
    Symbols are frozen at the initial ψ unless `operators` are supplied. Stepping stops early
    once |ψ|_0 exceeds `blowup_factor` times its initial value.
    """
    grid = state.grid
    sigma = state.sigma if sigma is None else sigma
    c = coeffs.on(grid)
    ops = operators or EnergyOperators(state.psi, s, cutoffs, capillary=sigma > 0)
    if sigma > 0 and ops.capillary is None:
        raise ValueError("surface tension needs the capillary operator")

    dt_max = cfl_limit(grid, coeffs, sigma, cfl)
    idx, mode = _dominant_mode(state.psi)
    if dt is None:
        oracle = dispersion_relation(coeffs, mode, sigma, form="paradiff", cutoffs=ops.MN.cutoffs) \
            if coeffs.is_constant() else None
        rate = max(abs(oracle["omega_plus"]), abs(oracle["omega_minus"])) if oracle else 0.0
        dt = dt_max if rate == 0 else min(dt_max, 2 * np.pi / rate / STEPS_PER_PERIOD)
        if not np.isfinite(dt):
            raise CFLViolation("no finite time step: σ = 0 and all coefficients vanish", dt, dt_max)
    if dt > dt_max * (1 + 1e-12):
        raise CFLViolation(f"dt={dt:.4g} exceeds the CFL limit {dt_max:.4g}", dt, dt_max)
    if n_steps is None:
        if t_end is None:
            raise ValueError("give n_steps or t_end")
        n_steps = int(np.ceil(t_end / dt))

    mask = (grid.kmag <= ops.kmax).astype(float)
    dealias = lambda f: np.real(grid.ifft(mask * grid.fft(f)))
    rho = c.rho_total
    w = c.w

    def accel(psi, psi_t):
        out = -rho * _hessian_contract(grid, w, w, psi) - 2.0 * rho * _directional(grid, w, psi_t)
        for sign in (1, -1):
            b = c.b(sign)
            out = out + c.rho(sign) * (_hessian_contract(grid, b, b, psi) - _hessian_contract(grid, c.u, c.u, psi))
        if sigma > 0:
            out = out - 0.5 * sigma * ops.capillary(psi)
        return dealias(out / rho)

    psi, psi_t = dealias(state.psi.values), dealias(state.psi_t.values)
    n = grid.Nh ** grid.dims
    norm0 = float(np.sqrt(grid.integrate(psi ** 2)))
    traj = Trajectory([], [], [], [], [], mode, float(dt))

    def record(t, psi, psi_t):
        E, Et = _energies(psi, psi_t, c, sigma, ops)
        traj.times.append(float(t))
        traj.amplitudes.append(complex(grid.fft(psi)[idx] / n))
        traj.energy.append(E)
        traj.energy_tilde.append(Et)
        traj.norms.append(float(np.sqrt(grid.integrate(psi ** 2))))

    t = state.t
    record(t, psi, psi_t)
    logger.info(f"Stepping {n_steps} RK4 steps of dt={dt:.4g} (CFL limit {dt_max:.4g}), mode {mode}")
    for step in range(1, n_steps + 1):
        k1 = (psi_t, accel(psi, psi_t))
        k2 = (psi_t + 0.5 * dt * k1[1], accel(psi + 0.5 * dt * k1[0], psi_t + 0.5 * dt * k1[1]))
        k3 = (psi_t + 0.5 * dt * k2[1], accel(psi + 0.5 * dt * k2[0], psi_t + 0.5 * dt * k2[1]))
        k4 = (psi_t + dt * k3[1], accel(psi + dt * k3[0], psi_t + dt * k3[1]))
        psi = psi + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        psi_t = psi_t + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t += dt
        traj.steps = step
        norm = float(np.sqrt(grid.integrate(psi ** 2)))
        blown = norm0 > 0 and norm > blowup_factor * norm0
        if step % record_every == 0 or step == n_steps or blown:
            record(t, psi, psi_t)
        if blown or not np.isfinite(norm):
            traj.blew_up = True
            logger.info(f"Blow-up detected at t={t:.4g}: |ψ|_0 grew by {norm / norm0:.3g}")
            break
    if np.max(np.abs(psi)) < PSI_SUP_LIMIT:
        traj.final = InterfaceState(SpectralField(grid, psi), SpectralField(grid, psi_t), t, sigma)
    return traj


def measure_frequency(traj: Trajectory, drift: float = 0.0) -> float:
    """Angular frequency from the zero crossings of Re(ψ̂_k e^{i drift t})."""
    t = np.asarray(traj.times)
    signal = np.real(np.asarray(traj.amplitudes) * np.exp(1j * drift * t))
    s = np.sign(signal)
    cross = np.flatnonzero(s[:-1] * s[1:] < 0)
    if len(cross) < 2:
        raise MissingHistory(f"need at least two zero crossings to measure a frequency, found {len(cross)}")
    t0 = t[cross] - signal[cross] * (t[cross + 1] - t[cross]) / (signal[cross + 1] - signal[cross])
    return float(np.pi / np.mean(np.diff(t0)))


def measure_growth_rate(traj: Trajectory, window: float = 0.5) -> float:
    """
    Exponential rate of |ψ̂_k|: fitted on the oscillation peaks when there are at least three,
    otherwise on the last `window` fraction of the record.
    """
    t = np.asarray(traj.times)
    amp = np.abs(np.asarray(traj.amplitudes))
    if len(t) < 3:
        raise MissingHistory("trajectory too short for a growth rate")
    peaks, _ = find_peaks(amp)
    if len(peaks) >= 3:
        tt, aa = t[peaks], amp[peaks]
    else:
        start = int(len(t) * (1.0 - window))
        tt, aa = t[start:], amp[start:]
    return float(np.polyfit(tt, np.log(np.maximum(aa, 1e-300)), 1)[0])


def amplitude_drift(traj: Trajectory, period: float) -> float:
    """max |ψ̂_k| over the last period relative to the first, minus one."""
    t = np.asarray(traj.times)
    amp = np.abs(np.asarray(traj.amplitudes))
    first = amp[t <= t[0] + period].max()
    last = amp[t >= t[-1] - period].max()
    return float(last / first - 1.0)


def gronwall_constant(traj: Trajectory) -> float:
    """max |d/dt(ℰ + ℰ̃)| / (ℰ + ℰ̃) along the record, by forward differences."""
    t = np.asarray(traj.times)
    total = np.asarray(traj.energy) + np.asarray(traj.energy_tilde)
    if len(t) < 2:
        return 0.0
    rate = np.abs(np.diff(total) / np.diff(t))
    base = np.maximum(np.abs(total[:-1]), 1e-300)
    return float(np.max(rate / base))
