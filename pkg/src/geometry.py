"""
Flattening of the two-phase slab, covariant derivatives in the flattened frame,
transport / integration-by-parts identities and the good-unknown commutator check.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from src.errors import DegenerateJacobian, GeometryError, GridMismatch, UnsupportedDerivative
from src.spectral import HorizontalGrid, VerticalGrid

logger = logging.getLogger(__name__)

JACOBIAN_FLOOR = 0.5
PSI_SUP_LIMIT = 10.0
SMOOTHNESS = 8


class SlabGrid:
    """Torus x [0, H] (upper phase) and torus x [-H, 0] (lower phase)."""

    def __init__(self, d: int = 3, H: float = 20.0, Nh: int = 32, Nv: int = 48, stretch: float = 5.0):
        if d not in (2, 3):
            raise GeometryError(f"dimension must be 2 or 3, got {d}")
        if H <= 10:
            raise GeometryError(f"slab half-height H={H} must exceed 10")
        if Nh < 4 or Nv < 4:
            raise GeometryError(f"need Nh, Nv >= 4 (got Nh={Nh}, Nv={Nv})")
        self.d = d
        self.H = float(H)
        self.Nh = int(Nh)
        self.Nv = int(Nv)
        self.stretch = float(stretch)
        self.horizontal = HorizontalGrid(Nh, d - 1)
        self.vertical = {1: VerticalGrid(H, Nv, 1, stretch), -1: VerticalGrid(H, Nv, -1, stretch)}

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.horizontal.shape + (self.Nv,)

    def coords(self, sign: int) -> List[np.ndarray]:
        """Broadcast coordinate arrays (x1, ..., x3) for one phase."""
        xs = [np.broadcast_to(c[..., None], self.shape) for c in self.horizontal.coords]
        x3 = np.broadcast_to(self.vertical[sign].x3, self.shape)
        return xs + [x3]

    def d_h(self, f: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
        return self.horizontal.diff(f, axis, order)

    def d3(self, f: np.ndarray, sign: int, order: int = 1) -> np.ndarray:
        return self.vertical[sign].diff(f, order)

    def partial(self, f: np.ndarray, i: int, sign: int) -> np.ndarray:
        """Flattened-coordinate derivative ∂_i, the last index being vertical."""
        if i == self.d - 1:
            return self.d3(f, sign)
        return self.d_h(f, i)

    def integrate(self, f: np.ndarray, sign: int) -> float:
        return float(self.horizontal.integrate(self.vertical[sign].integrate(f)))

    def integrate_surface(self, g: np.ndarray) -> float:
        return float(self.horizontal.integrate(g))

    def volume(self, sign: int) -> float:
        return self.integrate(np.ones(self.shape), sign)

    def same_as(self, other: "SlabGrid") -> bool:
        return (self.d, self.H, self.Nh, self.Nv, self.stretch) == (
            other.d, other.H, other.Nh, other.Nv, other.stretch)

    def to_dict(self) -> Dict:
        return {"d": self.d, "H": self.H, "Nh": self.Nh, "Nv": self.Nv, "stretch": self.stretch}


def _smoothstep() -> Polynomial:
    """C^8 transition S on [0,1] with S' proportional to t^8 (1-t)^8."""
    slope = Polynomial([0, 1]) ** SMOOTHNESS * Polynomial([1, -1]) ** SMOOTHNESS
    S = slope.integ()
    return S / S(1.0)


class CutoffFunction:
    """
    χ(s) = 1 - A·S((|s|-1)/(H-1)) clipped to the transition layer. A <= 1 is chosen so that
    ‖χ'‖∞ stays below 1/(psi0_sup + 20).
    """

    def __init__(self, H: float, psi0_sup: float):
        self.H = float(H)
        self.psi0_sup = float(psi0_sup)
        self.layer = self.H - 1.0
        self.slope_bound = 1.0 / (self.psi0_sup + 20.0)
        self._S = _smoothstep()
        self._S_derivs = [self._S] + [self._S.deriv(m) for m in range(1, SMOOTHNESS + 1)]
        self.max_step_slope = float(self._S_derivs[1](0.5))
        self.amplitude = min(1.0, self.slope_bound * self.layer / self.max_step_slope)
        if self.amplitude < 1.0:
            logger.warning(
                f"Cutoff slope bound 1/{self.psi0_sup + 20:g} cannot bring χ to zero within H={self.H:g}; "
                f"χ(±H) = {1 - self.amplitude:.4f}")

    def _step(self, tau: np.ndarray, order: int) -> np.ndarray:
        """S^(m)(τ), using S(τ) = 1 - S(1 - τ) on the upper half so the monomial form stays near 0."""
        S = self._S_derivs[order]
        upper = tau > 0.5
        mirrored = (-1.0) ** (order + 1) * S(1.0 - tau)
        if order == 0:
            mirrored = 1.0 + mirrored
        out = np.where(upper, mirrored, S(tau))
        if order == 0:
            out = np.where(tau >= 1.0, 1.0, np.where(tau <= 0.0, 0.0, out))
        return out

    def __call__(self, s, order: int = 0) -> np.ndarray:
        if order < 0 or order > SMOOTHNESS:
            raise UnsupportedDerivative(f"χ derivatives are tabulated up to order {SMOOTHNESS}")
        s = np.asarray(s, dtype=float)
        tau = np.clip((np.abs(s) - 1.0) / self.layer, 0.0, 1.0)
        if order == 0:
            return 1.0 - self.amplitude * self._step(tau, 0)
        inside = (np.abs(s) > 1.0) & (np.abs(s) < self.H)
        val = -self.amplitude * self._step(tau, order) * np.sign(s) ** order / self.layer ** order
        return np.where(inside, val, 0.0)

    def derivative_table(self, points: np.ndarray) -> np.ndarray:
        """Rows are χ, χ', ..., χ^(8) at the given points."""
        return np.stack([self(points, m) for m in range(SMOOTHNESS + 1)])

    def sup_derivative(self, order: int = 1, samples: int = 20001) -> float:
        s = np.linspace(-self.H, self.H, samples)
        return float(np.max(np.abs(self(s, order))))

    def derivative_sum(self, samples: int = 20001) -> float:
        return sum(self.sup_derivative(m, samples) for m in range(1, SMOOTHNESS + 1))

    def to_dict(self) -> Dict:
        return {"H": self.H, "psi0_sup": self.psi0_sup, "amplitude": self.amplitude,
                "slope_bound": self.slope_bound, "sup_slope": self.sup_derivative(1)}


def build_cutoff(H: float, psi0_sup: float) -> CutoffFunction:
    if H <= 10:
        raise GeometryError(f"H={H} too thin: the flattening needs H > 10")
    if psi0_sup > 1:
        raise GeometryError(f"psi0_sup={psi0_sup} exceeds the admissible initial amplitude 1")
    if psi0_sup < 0:
        raise GeometryError("psi0_sup must be non-negative")
    return CutoffFunction(H, psi0_sup)


@dataclass(frozen=True, eq=False)
class BulkField:
    """Scalar (grid shape) or vector (components first) samples on one phase."""
    values: np.ndarray
    sign: int

    def component(self, i: int) -> "BulkField":
        return BulkField(self.values[i], self.sign)

    def check(self, grid: SlabGrid, vector: bool = False) -> None:
        expected = ((grid.d,) if vector else ()) + grid.shape
        if self.values.shape != expected:
            raise GridMismatch(f"field shape {self.values.shape} does not match grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise GridMismatch("field holds non-finite values")


@dataclass(frozen=True, eq=False)
class PhaseGeometry:
    sign: int
    chi: np.ndarray
    phi: np.ndarray
    jacobian: np.ndarray
    dphi: Tuple[np.ndarray, ...]
    normal: Tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class InterfaceProfile:
    """ψ on Σ and, once flattened, φ, ∂3φ and 𝐍 for both phases."""
    grid: SlabGrid
    psi: np.ndarray
    psi_t: Optional[np.ndarray] = None
    cutoff: Optional[CutoffFunction] = None
    phases: Dict[int, PhaseGeometry] = field(default_factory=dict)
    safety: float = 1.0

    @classmethod
    def from_function(cls, grid: SlabGrid, fn, fn_t=None) -> "InterfaceProfile":
        xs = grid.horizontal.coords
        psi = np.asarray(fn(*xs), dtype=float) * np.ones(grid.horizontal.shape)
        psi_t = None if fn_t is None else np.asarray(fn_t(*xs), dtype=float) * np.ones(grid.horizontal.shape)
        return cls(grid, psi, psi_t)

    @property
    def flattened(self) -> bool:
        return bool(self.phases)

    def phase(self, sign: int) -> PhaseGeometry:
        if sign not in self.phases:
            raise GeometryError("profile has not been flattened")
        return self.phases[sign]

    def interface_normal(self) -> List[np.ndarray]:
        """N = (-∂̄ψ, 1) on Σ."""
        dims = self.grid.d - 1
        return [-self.grid.d_h(self.psi, a) for a in range(dims)] + [np.ones_like(self.psi)]

    def phi_t(self, sign: int) -> np.ndarray:
        if self.psi_t is None:
            raise GeometryError("profile carries no ψ_t")
        return self.phase(sign).chi * self.psi_t[..., None]

    def to_dict(self) -> Dict:
        out = {"grid": self.grid.to_dict(), "psi_coefficients": _complex_list(np.fft.rfftn(self.psi))}
        if self.cutoff is not None:
            out["cutoff"] = self.cutoff.to_dict()
        if self.flattened:
            out["min_jacobian"] = min(float(p.jacobian.min()) for p in self.phases.values())
        return out


def _complex_list(a: np.ndarray) -> List:
    return [[float(z.real), float(z.imag)] for z in a.ravel()]


def flatten(profile: InterfaceProfile, cutoff: CutoffFunction, safety: float = 1.0) -> InterfaceProfile:
    """Populates φ = x3 + χ(x3)ψ, ∂3φ, ∂̄φ and 𝐍 = (-∂̄φ, 1) for both phases."""
    grid = profile.grid
    sup = float(np.max(np.abs(profile.psi)))
    if sup >= PSI_SUP_LIMIT:
        raise GeometryError(f"sup|ψ| = {sup:.3f} must stay below {PSI_SUP_LIMIT}")
    if abs(cutoff.H - grid.H) > 1e-12:
        raise GridMismatch(f"cutoff built for H={cutoff.H} but grid has H={grid.H}")

    dims = grid.d - 1
    dpsi = [grid.d_h(profile.psi, a) for a in range(dims)]
    phases = {}
    for sign in (1, -1):
        x3 = grid.vertical[sign].x3
        chi = cutoff(x3)
        dchi = cutoff(x3, 1)
        phi = x3 + chi * profile.psi[..., None]
        J = 1.0 + dchi * profile.psi[..., None]
        dphi = tuple(chi * g[..., None] for g in dpsi)
        normal = tuple(-g for g in dphi) + (np.ones_like(phi),)
        min_J = float(J.min())
        if min_J < JACOBIAN_FLOOR * safety:
            raise DegenerateJacobian(
                f"min ∂3φ = {min_J:.4f} below {JACOBIAN_FLOOR * safety:g} in phase {sign:+d}", min_J)
        phases[sign] = PhaseGeometry(sign, chi, phi, J, dphi, normal)
    logger.debug(f"Flattened profile: sup|ψ|={sup:.3e}, min J={min(p.jacobian.min() for p in phases.values()):.4f}")
    return replace(profile, cutoff=cutoff, phases=phases, safety=safety)


class CovariantCalculus:
    """∂^φ_i = ∂̄_i + (𝐍_i/J)∂3 and the divergence-form Laplacian on one phase."""

    def __init__(self, profile: InterfaceProfile, sign: int):
        self.grid = profile.grid
        self.sign = sign
        self.geo = profile.phase(sign)
        if float(self.geo.jacobian.min()) < JACOBIAN_FLOOR * profile.safety:
            raise DegenerateJacobian("Jacobian below threshold", float(self.geo.jacobian.min()))
        self.d = self.grid.d

    def d3(self, f):
        return self.grid.d3(f, self.sign)

    def partial(self, f, i: int):
        """Covariant ∂^φ_i f."""
        g = self.geo
        if i == self.d - 1:
            return self.d3(f) / g.jacobian
        return self.grid.d_h(f, i) + g.normal[i] / g.jacobian * self.d3(f)

    def grad(self, f) -> np.ndarray:
        return np.stack([self.partial(f, i) for i in range(self.d)])

    def div(self, v) -> np.ndarray:
        return sum(self.partial(v[i], i) for i in range(self.d))

    def fluxes(self, u) -> List[np.ndarray]:
        """E^{ij}∂_j u for i = 1..d."""
        g = self.geo
        du3 = self.d3(u)
        dims = self.d - 1
        dh = [self.grid.d_h(u, a) for a in range(dims)]
        out = [g.jacobian * dh[a] - g.dphi[a] * du3 for a in range(dims)]
        grad_sq = sum(p ** 2 for p in g.dphi)
        out.append(-sum(g.dphi[a] * dh[a] for a in range(dims)) + (1.0 + grad_sq) / g.jacobian * du3)
        return out

    def divergence_form(self, u) -> np.ndarray:
        """∂_i(E^{ij}∂_j u), equal to J Δ^φ u."""
        F = self.fluxes(u)
        dims = self.d - 1
        return sum(self.grid.d_h(F[a], a) for a in range(dims)) + self.d3(F[-1])

    def laplacian(self, u) -> np.ndarray:
        return self.divergence_form(u) / self.geo.jacobian

    def conormal(self, u) -> np.ndarray:
        """E^{3j}∂_j u, which equals 𝐍·∇^φ u."""
        return self.fluxes(u)[-1]

    def transport_velocity(self, v, phi_t) -> List[np.ndarray]:
        """Components W of D_t = ∂_t + W·∂ in flattened coordinates."""
        g = self.geo
        v_dot_N = sum(v[i] * g.normal[i] for i in range(self.d))
        return [v[a] for a in range(self.d - 1)] + [(v_dot_N - phi_t) / g.jacobian]

    def advect(self, W, f) -> np.ndarray:
        return sum(W[i] * self.grid.partial(f, i, self.sign) for i in range(self.d))


def covariant_grad(f: BulkField, geo: InterfaceProfile) -> BulkField:
    f.check(geo.grid)
    return BulkField(CovariantCalculus(geo, f.sign).grad(f.values), f.sign)


def covariant_divergence(v: BulkField, geo: InterfaceProfile) -> BulkField:
    v.check(geo.grid, vector=True)
    return BulkField(CovariantCalculus(geo, v.sign).div(v.values), v.sign)


def covariant_laplacian(u: BulkField, geo: InterfaceProfile) -> BulkField:
    u.check(geo.grid)
    return BulkField(CovariantCalculus(geo, u.sign).laplacian(u.values), u.sign)


def material_derivative(f_t: BulkField, f: BulkField, v: BulkField, geo: InterfaceProfile,
                        phi_t: BulkField) -> BulkField:
    """∂t f + v̄·∇̄f + (v·𝐍 - ∂tφ)∂3 f / ∂3φ."""
    sign = f.sign
    if len({f_t.sign, f.sign, v.sign, phi_t.sign}) != 1:
        raise GridMismatch("fields belong to different phases")
    f.check(geo.grid)
    f_t.check(geo.grid)
    phi_t.check(geo.grid)
    v.check(geo.grid, vector=True)
    calc = CovariantCalculus(geo, sign)
    W = calc.transport_velocity(v.values, phi_t.values)
    return BulkField(f_t.values + calc.advect(W, f.values), sign)


def _oriented_boundary(grid: SlabGrid, q: np.ndarray, sign: int) -> float:
    """∫(top) q - ∫(bottom) q for the phase; index 0 is Σ, the last index the wall."""
    return sign * (grid.integrate_surface(q[..., -1]) - grid.integrate_surface(q[..., 0]))


def transport_identity_check(f: Sequence[BulkField], g: Sequence[BulkField], v: Sequence[BulkField],
                             geo_path: Sequence[InterfaceProfile], dt: float) -> Dict[str, float]:
    """
    Three time levels (t-dt, t, t+dt) of f, g, v and flattened profiles. Returns residuals of
    the transport identity, its Reynolds form and the integration-by-parts identity at the
    middle level.
    """
    if not (len(f) == len(g) == len(v) == len(geo_path) == 3):
        raise GridMismatch("transport check needs exactly three time levels", "geometry")
    grid = geo_path[1].grid
    for prof in geo_path:
        if not prof.grid.same_as(grid):
            raise GridMismatch("profiles along the path use different grids")
    sign = f[1].sign

    def weighted_integral(k):
        J = geo_path[k].phase(sign).jacobian
        return grid.integrate(f[k].values * g[k].values * J, sign)

    lhs = (weighted_integral(2) - weighted_integral(0)) / (2 * dt)

    mid = geo_path[1]
    calc = CovariantCalculus(mid, sign)
    geo = mid.phase(sign)
    h = f[1].values * g[1].values
    h_t = (f[2].values * g[2].values - f[0].values * g[0].values) / (2 * dt)
    if mid.psi_t is not None:
        phi_t = mid.phi_t(sign)
    else:
        phi_t = (geo_path[2].phase(sign).phi - geo_path[0].phase(sign).phi) / (2 * dt)

    dth = h_t - phi_t / geo.jacobian * calc.d3(h)
    rhs = grid.integrate(dth * geo.jacobian, sign) + _oriented_boundary(grid, h * phi_t, sign)

    vel = v[1].values
    W = calc.transport_velocity(vel, phi_t)
    Dth = h_t + calc.advect(W, h)
    v_dot_N = sum(vel[i] * geo.normal[i] for i in range(grid.d))
    reynolds = (grid.integrate((Dth + h * calc.div(vel)) * geo.jacobian, sign)
                + _oriented_boundary(grid, h * (phi_t - v_dot_N), sign))

    ibp = 0.0
    fv, gv = f[1].values, g[1].values
    for i in range(grid.d):
        vol = grid.integrate((calc.partial(fv, i) * gv + fv * calc.partial(gv, i)) * geo.jacobian, sign)
        bdy = _oriented_boundary(grid, fv * gv * geo.normal[i], sign)
        ibp = max(ibp, abs(vol - bdy))

    report = {
        "transport_residual": abs(lhs - rhs),
        "reynolds_residual": abs(lhs - reynolds),
        "ibp_residual": ibp,
        "scale": abs(lhs) + abs(rhs),
    }
    logger.debug(f"Transport identity check (phase {sign:+d}): {report}")
    return report


class TangentialDerivative:
    """
    Product of at most two spatial tangential derivatives. Factors are horizontal axes
    ("x1", "x2") or "w" for the weighted normal derivative ω(x3)∂3.
    """

    def __init__(self, factors: Sequence[str]):
        factors = tuple(factors)
        if not 1 <= len(factors) <= 2:
            raise UnsupportedDerivative(f"tangential derivatives of order {len(factors)} are not supported")
        for fac in factors:
            if fac not in ("x1", "x2", "w"):
                raise UnsupportedDerivative(f"unknown tangential factor {fac!r}")
        self.factors = factors

    @property
    def order(self) -> int:
        return len(self.factors)

    def _apply_factor(self, fac: str, f, grid: SlabGrid, sign: int):
        if fac == "w":
            from src.norms import AnisotropicWeight
            omega = AnisotropicWeight(grid.H)(grid.vertical[sign].x3)
            return omega * grid.d3(f, sign)
        axis = int(fac[1]) - 1
        if axis >= grid.d - 1:
            raise UnsupportedDerivative(f"{fac} does not exist for d={grid.d}")
        return grid.d_h(f, axis)

    def apply(self, f, grid: SlabGrid, sign: int):
        out = f
        for fac in reversed(self.factors):
            out = self._apply_factor(fac, out, grid, sign)
        return out

    def leibniz_remainder(self, a, b, grid: SlabGrid, sign: int):
        """[𝒯, a, b] = 𝒯(ab) - a𝒯b - b𝒯a, evaluated from the Leibniz rule."""
        if self.order == 1:
            return np.zeros(np.broadcast(a, b).shape)
        t1, t2 = self.factors
        ap = lambda fac, x: self._apply_factor(fac, x, grid, sign)
        return ap(t1, a) * ap(t2, b) + ap(t2, a) * ap(t1, b)

    def inverse_jacobian_correction(self, J, grid: SlabGrid, sign: int):
        """Q in 𝒯(1/J) = -𝒯J/J² + Q."""
        if self.order == 1:
            return np.zeros_like(J)
        t1, t2 = self.factors
        return 2 * self._apply_factor(t1, J, grid, sign) * self._apply_factor(t2, J, grid, sign) / J ** 3


def good_unknown_residual(f: BulkField, geo: InterfaceProfile, op: TangentialDerivative) -> float:
    """Max-norm residual of 𝒯∂^φ_i f = ∂^φ_i 𝐅 + ℭ_i over all i."""
    f.check(geo.grid)
    grid, sign = geo.grid, f.sign
    calc = CovariantCalculus(geo, sign)
    pg = geo.phase(sign)
    fv = f.values
    J = pg.jacobian

    def comm_d3(u):
        return op.apply(grid.d3(u, sign), grid, sign) - grid.d3(op.apply(u, grid, sign), sign)

    T_phi = op.apply(pg.phi, grid, sign)
    d3f = grid.d3(fv, sign)
    dphi3_f = calc.partial(fv, grid.d - 1)
    F = op.apply(fv, grid, sign) - T_phi * dphi3_f
    Q = op.inverse_jacobian_correction(J, grid, sign)
    comm_f = comm_d3(fv)
    comm_phi = comm_d3(pg.phi)

    worst = 0.0
    for i in range(grid.d):
        N_i = pg.normal[i]
        lhs = op.apply(calc.partial(fv, i), grid, sign)
        C_i = (T_phi * calc.partial(dphi3_f, i)
               + op.leibniz_remainder(N_i / J, d3f, grid, sign)
               + d3f * op.leibniz_remainder(N_i, 1.0 / J, grid, sign)
               + N_i * d3f * Q
               + N_i / J * comm_f
               - N_i / J ** 2 * d3f * comm_phi)
        worst = max(worst, float(np.max(np.abs(lhs - calc.partial(F, i) - C_i))))
    return worst
