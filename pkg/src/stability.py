"""
Stability conditions for current-vortex sheets, the Friedrichs symmetrizer μ±,
hyperbolicity/ellipticity diagnostics and the secondary-symmetrization residuals.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from src.eos import EosParams, density_from_pressure
from src.errors import CollinearFields, GridMismatch, StabilityViolated
from src.geometry import CovariantCalculus, InterfaceProfile

logger = logging.getLogger(__name__)

COLLINEAR_TOL = 1e-10
DELTA0_MAX = 0.125


def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Third component of the cross product of two in-plane vectors (components first)."""
    return a[0] * b[1] - a[1] * b[0]


@dataclass(frozen=True, eq=False)
class TwoPhaseTrace:
    """
    Interface traces; vector quantities carry the tangential components on the first axis.
    c_s = inf is the incompressible limit.
    """
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    b_plus: np.ndarray
    b_minus: np.ndarray
    cs_plus: np.ndarray
    cs_minus: np.ndarray

    @classmethod
    def from_arrays(cls, rho_plus, rho_minus, v_plus, v_minus, b_plus, b_minus,
                    cs_plus=np.inf, cs_minus=np.inf) -> "TwoPhaseTrace":
        v_plus = np.atleast_1d(np.asarray(v_plus, dtype=float))
        v_minus = np.atleast_1d(np.asarray(v_minus, dtype=float))
        b_plus = np.atleast_1d(np.asarray(b_plus, dtype=float))
        b_minus = np.atleast_1d(np.asarray(b_minus, dtype=float))
        if v_plus.ndim == 1:
            v_plus, v_minus, b_plus, b_minus = (x[:, None] for x in (v_plus, v_minus, b_plus, b_minus))
        pts = v_plus.shape[1:]
        as_field = lambda x: np.broadcast_to(np.asarray(x, dtype=float), pts).copy()
        trace = cls(as_field(rho_plus), as_field(rho_minus), v_plus, v_minus, b_plus, b_minus,
                    as_field(cs_plus), as_field(cs_minus))
        trace.validate()
        return trace

    @property
    def dims(self) -> int:
        return self.v_plus.shape[0]

    @property
    def jump_v(self) -> np.ndarray:
        return self.v_plus - self.v_minus

    def rho(self, sign: int):
        return self.rho_plus if sign > 0 else self.rho_minus

    def b(self, sign: int):
        return self.b_plus if sign > 0 else self.b_minus

    def cs(self, sign: int):
        return self.cs_plus if sign > 0 else self.cs_minus

    def validate(self, rho_floor: float = 0.0) -> None:
        shapes = {x.shape for x in (self.v_plus, self.v_minus, self.b_plus, self.b_minus)}
        if len(shapes) != 1:
            raise GridMismatch("trace vectors have inconsistent shapes", "stability")
        if self.dims not in (1, 2):
            raise GridMismatch(f"traces must have 1 or 2 tangential components, got {self.dims}", "stability")
        rho_min = min(float(np.min(self.rho_plus)), float(np.min(self.rho_minus)))
        if rho_min <= 0.0 or rho_min < rho_floor:
            raise StabilityViolated(f"density {rho_min:g} below the floor {rho_floor:g} on the interface")

    def subset(self, idx) -> "TwoPhaseTrace":
        return TwoPhaseTrace(self.rho_plus[idx], self.rho_minus[idx], self.v_plus[:, idx], self.v_minus[:, idx],
                             self.b_plus[:, idx], self.b_minus[:, idx], self.cs_plus[idx], self.cs_minus[idx])


@dataclass(frozen=True, eq=False)
class SpeedSet:
    cA_plus: np.ndarray
    cA_minus: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray

    def a(self, sign: int):
        return self.a_plus if sign > 0 else self.a_minus

    def cA(self, sign: int):
        return self.cA_plus if sign > 0 else self.cA_minus


def _alfven_ratio_sq(cA, cs):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(np.isinf(cs), 0.0, (cA / cs) ** 2)
    return r


def speeds(trace: TwoPhaseTrace) -> SpeedSet:
    out = {}
    for sign, tag in ((1, "plus"), (-1, "minus")):
        cA = np.linalg.norm(trace.b(sign), axis=0) / np.sqrt(trace.rho(sign))
        a = np.sqrt(trace.rho(sign) * (1.0 + _alfven_ratio_sq(cA, trace.cs(sign))))
        out[f"cA_{tag}"] = cA
        out[f"a_{tag}"] = a
    return SpeedSet(**out)


@dataclass
class StabilityReport:
    dimension: int
    delta0: float
    margin_upper: float
    margin_lower: float
    holds: bool
    pointwise_upper: np.ndarray
    pointwise_lower: np.ndarray
    extra: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {"dimension": self.dimension, "delta0": self.delta0, "margin_upper": self.margin_upper,
                "margin_lower": self.margin_lower, "holds": self.holds, **self.extra}


def _check_delta0(delta0: float, allow_wide: bool):
    if allow_wide:
        if not 0 < delta0 < 1:
            raise StabilityViolated(f"δ0={delta0} must lie in (0, 1)")
    elif not 0 < delta0 < DELTA0_MAX:
        raise StabilityViolated(f"δ0={delta0} outside the admissible range (0, 1/8)")


def check_stability_3d(trace: TwoPhaseTrace, delta0: float, allow_wide: bool = False) -> StabilityReport:
    """Margins of (1-δ0)|b⁺×b⁻| >= a±|b∓×[v]| >= δ0, minimised over points and phases."""
    _check_delta0(delta0, allow_wide)
    if trace.dims != 2:
        raise GridMismatch("check_stability_3d needs two tangential components", "stability")
    sp = speeds(trace)
    jump = trace.jump_v
    bb = np.abs(cross2(trace.b_plus, trace.b_minus))
    drive_plus = sp.a_plus * np.abs(cross2(trace.b_minus, jump))
    drive_minus = sp.a_minus * np.abs(cross2(trace.b_plus, jump))
    upper = np.minimum((1 - delta0) * bb - drive_plus, (1 - delta0) * bb - drive_minus)
    lower = np.minimum(drive_plus - delta0, drive_minus - delta0)
    report = StabilityReport(3, delta0, float(upper.min()), float(lower.min()),
                             bool(upper.min() >= 0 and lower.min() >= 0), upper, lower)
    logger.debug(f"3D stability: upper={report.margin_upper:.4g}, lower={report.margin_lower:.4g}")
    return report


def classify_subsonic_2d(trace: TwoPhaseTrace) -> Dict:
    """
    Relative speed |[v1]|/2 of the rectilinear background against c_s c_A / sqrt(c_A² + c_s²)
    per phase.
    """
    sp = speeds(trace)
    rel = np.abs(trace.jump_v[0]) / 2.0
    out = {}
    for sign, tag in ((1, "plus"), (-1, "minus")):
        cA, cs = sp.cA(sign), trace.cs(sign)
        with np.errstate(divide="ignore", invalid="ignore"):
            thresh_sq = np.where(np.isinf(cs), cA ** 2, cs ** 2 * cA ** 2 / (cA ** 2 + cs ** 2))
        out[f"subsonic_{tag}"] = bool(np.all(rel ** 2 < thresh_sq))
        out[f"threshold_{tag}"] = float(np.min(np.sqrt(thresh_sq)))
    out["relative_speed"] = float(np.max(rel))
    return out


def check_stability_2d(trace: TwoPhaseTrace, delta0: float, allow_wide: bool = False) -> StabilityReport:
    _check_delta0(delta0, allow_wide)
    if trace.dims != 1:
        raise GridMismatch("check_stability_2d needs one tangential component", "stability")
    sp = speeds(trace)
    jump = np.abs(trace.jump_v[0])
    upper = np.abs(trace.b_plus[0]) / sp.a_plus + np.abs(trace.b_minus[0]) / sp.a_minus - (1 + delta0) * jump
    lower = jump
    holds = bool(upper.min() > 0 and lower.min() > 0)
    report = StabilityReport(2, delta0, float(upper.min()), float(lower.min()), holds, upper, lower,
                             extra=classify_subsonic_2d(trace))
    logger.debug(f"2D stability: upper={report.margin_upper:.4g}, |[v1]|min={report.margin_lower:.4g}")
    return report


def localizer(x3, delta1: float = 1.0):
    """Smooth bump η with η(0) = 1 and support |x3| < δ1."""
    s = np.asarray(x3, dtype=float) / delta1
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True, eq=False)
class SymmetrizerField:
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    delta1: float = 1.0
    jump_residual: float = 0.0

    def mu_bar(self, sign: int):
        return self.mu_plus if sign > 0 else self.mu_minus

    def extend(self, sign: int, x3) -> np.ndarray:
        """μ± = μ̄±(x') η(x3), broadcast over the trailing vertical axis."""
        return self.mu_bar(sign)[..., None] * localizer(x3, self.delta1)


def _jump_residual(trace: TwoPhaseTrace, mu_plus, mu_minus) -> float:
    res = trace.jump_v - (mu_plus * trace.b_plus - mu_minus * trace.b_minus)
    return float(np.max(np.abs(res))) if res.size else 0.0


def solve_mu_3d(trace: TwoPhaseTrace, delta1: float = 1.0) -> SymmetrizerField:
    """Solves [v̄] = μ̄⁺b̄⁺ - μ̄⁻b̄⁻ pointwise."""
    if trace.dims != 2:
        raise GridMismatch("solve_mu_3d needs two tangential components", "stability")
    bp, bm = trace.b_plus, trace.b_minus
    det = cross2(bp, bm)
    scale = np.linalg.norm(bp, axis=0) * np.linalg.norm(bm, axis=0)
    if np.any(np.abs(det) < COLLINEAR_TOL * scale) or np.any(scale == 0):
        raise CollinearFields("magnetic traces are collinear at some interface points")
    pts = det.shape
    A = np.empty(pts + (2, 2))
    A[..., 0, 0], A[..., 0, 1] = bp[0], -bm[0]
    A[..., 1, 0], A[..., 1, 1] = bp[1], -bm[1]
    rhs = np.moveaxis(trace.jump_v, 0, -1)[..., None]
    mu = np.linalg.solve(A, rhs)[..., 0]
    mu_plus, mu_minus = mu[..., 0], mu[..., 1]
    residual = _jump_residual(trace, mu_plus, mu_minus)
    if residual > 1e-12 * max(1.0, float(np.max(np.abs(trace.jump_v)))):
        logger.warning(f"μ jump identity residual {residual:.3e} above 1e-12")
    return SymmetrizerField(mu_plus, mu_minus, delta1, residual)


def quotient_convention_report(trace: TwoPhaseTrace, mu: SymmetrizerField) -> Dict:
    """Compares the solved μ with the closed-form quotient under both orientations."""
    bp, bm, jump = trace.b_plus, trace.b_minus, trace.jump_v
    num_plus, num_minus = cross2(bm, jump), cross2(bp, jump)
    errs = {}
    for name, denom in (("b+ x b-", cross2(bp, bm)), ("b- x b+", cross2(bm, bp))):
        err = max(float(np.max(np.abs(num_plus / denom - mu.mu_plus))),
                  float(np.max(np.abs(num_minus / denom - mu.mu_minus))))
        errs[name] = err
    agreeing = min(errs, key=errs.get)
    return {"errors": errs, "agreeing_denominator": agreeing}


def solve_mu_2d(trace: TwoPhaseTrace, delta1: float = 1.0) -> SymmetrizerField:
    if trace.dims != 1:
        raise GridMismatch("solve_mu_2d needs one tangential component", "stability")
    sp = speeds(trace)
    b1p, b1m = trace.b_plus[0], trace.b_minus[0]
    jump = trace.jump_v[0]
    capacity = np.abs(b1p) / sp.a_plus + np.abs(b1m) / sp.a_minus
    violated = (np.abs(jump) >= capacity) & (np.abs(jump) > 0)
    if np.any(violated):
        raise StabilityViolated("|[v1]| reaches |b1⁺|/a⁺ + |b1⁻|/a⁻; no admissible μ",
                                float(np.min(capacity - np.abs(jump))))
    denom = sp.a_minus * np.abs(b1p) + sp.a_plus * np.abs(b1m)
    safe = np.where(denom > 0, denom, 1.0)
    mu_plus = np.where(denom > 0, np.sign(b1p) * sp.a_minus * jump / safe, 0.0)
    mu_minus = np.where(denom > 0, -np.sign(b1m) * sp.a_plus * jump / safe, 0.0)
    return SymmetrizerField(mu_plus, mu_minus, delta1, _jump_residual(trace, mu_plus, mu_minus))


def hyperbolicity_check(trace: TwoPhaseTrace, mu: SymmetrizerField) -> Dict:
    """
    Per phase and point: minimum eigenvalue of the 3x3 symmetrizer block against the closed
    form determinant 1 - μ²ρ(1 + (c_A/c_s)²).
    """
    sp = speeds(trace)
    report = {"agree": True}
    for sign, tag in ((1, "plus"), (-1, "minus")):
        m = np.abs(mu.mu_bar(sign)) * np.sqrt(trace.rho(sign))
        r = np.sqrt(_alfven_ratio_sq(sp.cA(sign), trace.cs(sign)))
        mats = np.zeros(m.shape + (3, 3))
        mats[..., 0, 0] = mats[..., 1, 1] = mats[..., 2, 2] = 1.0
        mats[..., 0, 1] = mats[..., 1, 0] = -m
        mats[..., 0, 2] = mats[..., 2, 0] = -m * r
        min_eig = np.linalg.eigvalsh(mats)[..., 0]
        det = 1.0 - m ** 2 * (1.0 + r ** 2)
        tol = 1e-12
        agree = (np.sign(np.where(np.abs(min_eig) < tol, 0, min_eig))
                 == np.sign(np.where(np.abs(det) < tol, 0, det)))
        report[f"min_eig_{tag}"] = min_eig
        report[f"det_{tag}"] = det
        report["agree"] = report["agree"] and bool(np.all(agree))
    report["hyperbolic"] = bool(np.all(report["min_eig_plus"] > 0) and np.all(report["min_eig_minus"] > 0))
    return report


def mu_margin_check(trace: TwoPhaseTrace, mu: SymmetrizerField, delta0: float) -> float:
    """max |μ̄±|a± - (1 - δ0); non-positive when the 3D condition holds."""
    sp = speeds(trace)
    worst = max(float(np.max(np.abs(mu.mu_plus) * sp.a_plus)), float(np.max(np.abs(mu.mu_minus) * sp.a_minus)))
    return worst - (1.0 - delta0)


def _relative_velocity(trace: TwoPhaseTrace) -> np.ndarray:
    rp, rm = trace.rho_plus, trace.rho_minus
    return np.sqrt(rp * rm) / (rp + rm) * trace.jump_v


@dataclass
class EllipticityReport:
    infimum: float
    closed_form: float
    direction: np.ndarray
    point: int
    pointwise: np.ndarray

    def to_dict(self) -> Dict:
        return {"infimum": self.infimum, "closed_form": self.closed_form,
                "direction": [float(x) for x in np.atleast_1d(self.direction)], "point": self.point}


def ellipticity_matrix(trace: TwoPhaseTrace) -> np.ndarray:
    """ρ⁺𝐛⁺𝐛⁺ + ρ⁻𝐛⁻𝐛⁻ - (ρ⁺+ρ⁻)𝐮𝐮 as a (points..., k, k) stack; ρ𝐛𝐛 = b b."""
    u = _relative_velocity(trace)
    outer = lambda a, c: np.einsum("i...,j...->...ij", a, c)
    total = (trace.rho_plus + trace.rho_minus)[..., None, None]
    return outer(trace.b_plus, trace.b_plus) + outer(trace.b_minus, trace.b_minus) - total * outer(u, u)


def ellipticity_form(trace: TwoPhaseTrace, directions: int = 3600) -> EllipticityReport:
    """Infimum over unit z of the quadratic form, by angular sweep cross-checked by eigen-solve."""
    M = ellipticity_matrix(trace)
    flat = M.reshape((-1,) + M.shape[-2:])
    if trace.dims == 1:
        vals = flat[:, 0, 0]
        k = int(np.argmin(vals))
        return EllipticityReport(float(vals[k]), float(vals[k]), np.array([1.0]), k, vals)
    theta = np.linspace(0.0, np.pi, directions, endpoint=False)
    Z = np.stack([np.cos(theta), np.sin(theta)])
    sweep = np.einsum("pij,in,jn->pn", flat, Z, Z)
    pointwise = sweep.min(axis=1)
    k = int(np.argmin(pointwise))
    w, V = np.linalg.eigh(flat[k])
    direction = V[:, 0] if V[1, 0] >= 0 else -V[:, 0]
    report = EllipticityReport(float(pointwise[k]), float(w[0]), direction, k, pointwise)
    if report.infimum < 0:
        logger.info(f"Ellipticity lost at point {k}: infimum {report.infimum:.4g} along {direction}")
    return report


def ellipticity_form_2d(trace: TwoPhaseTrace) -> np.ndarray:
    """ρ⁺((𝐛1⁺)² - 𝐮1²) + ρ⁻((𝐛1⁻)² - 𝐮1²), pointwise."""
    u1 = _relative_velocity(trace)[0]
    return trace.b_plus[0] ** 2 + trace.b_minus[0] ** 2 - (trace.rho_plus + trace.rho_minus) * u1 ** 2


def recover_interface_gradient(b_plus: np.ndarray, b_minus: np.ndarray, b3_plus: np.ndarray,
                               b3_minus: np.ndarray) -> np.ndarray:
    """Solves b̄±·∇̄ψ = b3± for ∇̄ψ (components first)."""
    det = cross2(b_plus, b_minus)
    scale = np.linalg.norm(b_plus, axis=0) * np.linalg.norm(b_minus, axis=0)
    if np.any(np.abs(det) < COLLINEAR_TOL * scale) or np.any(scale == 0):
        raise CollinearFields("cannot recover ∇̄ψ from collinear magnetic traces")
    g1 = (b3_plus * b_minus[1] - b3_minus * b_plus[1]) / det
    g2 = (b_plus[0] * b3_minus - b_minus[0] * b3_plus) / det
    return np.stack([g1, g2])


@dataclass(frozen=True, eq=False)
class BulkState:
    """One phase of (v, b, p, S) with the first time derivatives at fixed flattened x."""
    sign: int
    v: np.ndarray
    b: np.ndarray
    p: np.ndarray
    S: np.ndarray
    v_t: np.ndarray
    b_t: np.ndarray
    p_t: np.ndarray
    phi_t: np.ndarray


def _mhd_residuals(state: BulkState, geo: InterfaceProfile, eos: EosParams):
    """Pieces of the momentum (M), continuity (C) and induction (B) residuals."""
    calc = CovariantCalculus(geo, state.sign)
    d = geo.grid.d
    thermo = density_from_pressure(state.p, state.S, eos)
    rho, F_p = thermo.rho, thermo.F_p
    W = calc.transport_velocity(state.v, state.phi_t)
    Dt = lambda f, f_t: f_t + calc.advect(W, f)
    Dv = np.stack([Dt(state.v[i], state.v_t[i]) for i in range(d)])
    Db = np.stack([Dt(state.b[i], state.b_t[i]) for i in range(d)])
    Dp = Dt(state.p, state.p_t)
    grad_b = np.stack([calc.grad(state.b[j]) for j in range(d)])      # [j, i] = ∂^φ_i b_j
    grad_v = np.stack([calc.grad(state.v[j]) for j in range(d)])
    grad_p = calc.grad(state.p)
    div_v = sum(grad_v[i, i] for i in range(d))
    b_grad_b = np.einsum("k...,jk...->j...", state.b, grad_b)        # (b·∇^φ) b
    b_grad_v = np.einsum("k...,jk...->j...", state.b, grad_v)
    grad_mag = np.einsum("j...,ji...->i...", state.b, grad_b)         # ∇^φ(|b|²/2) by the product rule
    M = rho * Dv - b_grad_b + grad_p + grad_mag
    C = F_p * Dp + div_v
    B = Db - b_grad_v + state.b * div_v
    parts = {"rho": rho, "F_p": F_p, "Dv": Dv, "Db": Db, "Dp": Dp, "grad_p": grad_p, "grad_mag": grad_mag,
             "b_grad_b": b_grad_b, "b_grad_v": b_grad_v, "div_v": div_v}
    return M, C, B, parts


def secondary_symmetrize_residual(state: BulkState, geo: InterfaceProfile, mu: np.ndarray, eos: EosParams,
                                  sources: Optional[Sequence[np.ndarray]] = None) -> Dict[str, float]:
    """
    Residuals of the μ-transformed system, both assembled term by term and as the linear
    combinations (M - μρB, C + μ𝔉_p M·b, B - μM) of the original residuals. `sources`
    (M, C, B) are subtracted from the original equations for manufactured solutions.
    """
    if mu.shape != state.p.shape:
        raise GridMismatch(f"μ has shape {mu.shape}, expected {state.p.shape}", "stability")
    M, C, B, parts = _mhd_residuals(state, geo, eos)
    sM, sC, sB = sources if sources is not None else (0.0, 0.0, 0.0)
    rho, F_p, b = parts["rho"], parts["F_p"], state.b

    M0, C0, B0 = M - sM, C - sC, B - sB
    comb_M = M0 - mu * rho * B0
    comb_C = C0 + mu * F_p * np.einsum("i...,i...->...", M0, b)
    comb_B = B0 - mu * M0

    induction = parts["Db"] - parts["b_grad_v"] + b * parts["div_v"]
    momentum = rho * parts["Dv"] - parts["b_grad_b"] + parts["grad_p"] + parts["grad_mag"]
    cross = rho * np.einsum("i...,i...->...", parts["Dv"], b) + np.einsum("i...,i...->...", b, parts["grad_p"])
    src_dot_b = np.einsum("i...,i...->...", np.asarray(sM) * np.ones_like(b), b)
    direct_M = momentum - mu * rho * induction - (sM - mu * rho * sB)
    direct_C = F_p * parts["Dp"] + parts["div_v"] + mu * F_p * cross - (sC + mu * F_p * src_dot_b)
    direct_B = induction - mu * momentum - (sB - mu * sM)

    ortho = np.einsum("i...,i...->...", parts["grad_mag"] - parts["b_grad_b"], b)
    norm = lambda x: float(np.max(np.abs(x)))
    report = {
        "momentum": norm(direct_M),
        "continuity": norm(direct_C),
        "induction": norm(direct_B),
        "original_momentum": norm(M0),
        "original_continuity": norm(C0),
        "original_induction": norm(B0),
        "combination_gap": max(norm(direct_M - comb_M), norm(direct_C - comb_C), norm(direct_B - comb_B)),
        "orthogonality": norm(ortho),
    }
    logger.debug(f"Secondary symmetrization residuals (phase {state.sign:+d}): {report}")
    return report


def sample_traces_3d(rng: np.random.Generator, n: int, delta0: float = 0.1, violate: bool = False,
                     incompressible_fraction: float = 0.25, batch: int = 256) -> TwoPhaseTrace:
    """
    Random one-point-per-sample 3D traces. Admissible samples place |[v]| strictly inside the
    window (1-δ0)|b⁺×b⁻| >= a±|b∓×[v]| >= δ0 allows; violating ones turn b⁻ to within a small
    angle of b⁺ and take a jump large enough that the ellipticity form is negative along [v].
    """
    parts: Dict[str, list] = {k: [] for k in ("rho_p", "rho_m", "v_p", "v_m", "b_p", "b_m", "cs_p", "cs_m")}
    found = 0
    while found < n:
        rho_p, rho_m = rng.uniform(0.5, 2.0, batch), rng.uniform(0.5, 2.0, batch)
        cs = lambda: np.where(rng.random(batch) < incompressible_fraction, np.inf, rng.uniform(1.0, 5.0, batch))
        cs_p, cs_m = cs(), cs()
        ang_p = rng.uniform(0.0, 2 * np.pi, batch)
        if violate:
            ang_m = ang_p + rng.choice([-1.0, 1.0], batch) * rng.uniform(0.05, 0.3, batch)
        else:
            ang_m = ang_p + rng.uniform(0.5, np.pi - 0.5, batch)
        unit = lambda a: np.stack([np.cos(a), np.sin(a)])
        b_p = rng.uniform(0.5, 2.0, batch) * unit(ang_p)
        b_m = rng.uniform(0.5, 2.0, batch) * unit(ang_m)
        e = unit(rng.uniform(0.0, 2 * np.pi, batch))
        v_m = rng.normal(scale=0.3, size=(2, batch))
        if violate:
            proj = (np.einsum("ij,ij->j", b_p, e) ** 2 + np.einsum("ij,ij->j", b_m, e) ** 2)
            threshold = np.sqrt(proj * (rho_p + rho_m) / (rho_p * rho_m))
            mag = threshold * rng.uniform(1.2, 3.0, batch)
            keep = proj > 0.05
        else:
            still = TwoPhaseTrace.from_arrays(rho_p, rho_m, v_m, v_m, b_p, b_m, cs_p, cs_m)
            sp = speeds(still)
            unit_p = sp.a_plus * np.abs(cross2(b_m, e))
            unit_m = sp.a_minus * np.abs(cross2(b_p, e))
            with np.errstate(divide="ignore", invalid="ignore"):
                vmax = (1 - delta0) * np.abs(cross2(b_p, b_m)) / np.maximum(unit_p, unit_m)
                vmin = delta0 / np.minimum(unit_p, unit_m)
            keep = np.isfinite(vmin) & (vmin < vmax)
            mag = vmin + (vmax - vmin) * rng.uniform(0.05, 0.95, batch)
        take = np.flatnonzero(keep)[: n - found]
        found += take.size
        for key, arr in (("rho_p", rho_p), ("rho_m", rho_m), ("cs_p", cs_p), ("cs_m", cs_m)):
            parts[key].append(arr[take])
        for key, arr in (("b_p", b_p), ("b_m", b_m), ("v_m", v_m), ("v_p", v_m + mag * e)):
            parts[key].append(arr[:, take])
    cat = lambda key, axis: np.concatenate(parts[key], axis=axis)
    return TwoPhaseTrace.from_arrays(cat("rho_p", 0), cat("rho_m", 0), cat("v_p", 1), cat("v_m", 1),
                                     cat("b_p", 1), cat("b_m", 1), cat("cs_p", 0), cat("cs_m", 0))
