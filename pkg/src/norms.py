"""
Anisotropic Sobolev norms H_*^m with the degenerate weight ω(x3) = (H² - x3²)x3²,
the layered energy functional at reduced base order, and embedding spot checks.
"""

import itertools
import logging
from dataclasses import dataclass
from math import ceil, factorial
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from src.eos import EosParams, log_density_p_derivative
from src.errors import GridMismatch, MissingHistory
from src.geometry import SlabGrid

logger = logging.getLogger(__name__)

BASE_ORDER = 2


class AnisotropicWeight:
    """ω(x3) = (H² - x3²)x3² and its derivatives."""

    def __init__(self, H: float):
        self.H = float(H)
        self.poly = Polynomial([0.0, 0.0, self.H ** 2, 0.0, -1.0])

    def __call__(self, x3, order: int = 0) -> np.ndarray:
        p = self.poly.deriv(order) if order else self.poly
        return p(np.asarray(x3, dtype=float))

    def table(self, x3, max_order: int = 4) -> np.ndarray:
        return np.stack([self(x3, m) for m in range(max_order + 1)])


@dataclass(frozen=True)
class TangentialMultiIndex:
    """
    (α0, α1, ..., α_{d-1}, α_d, α_{d+1}): time, horizontal axes, plain normal derivative and
    the weighted normal derivative ω∂3.
    """
    alpha: Tuple[int, ...]

    def __post_init__(self):
        if any(a < 0 for a in self.alpha):
            raise ValueError(f"multi-index entries must be non-negative: {self.alpha}")
        if len(self.alpha) < 4:
            raise ValueError("a multi-index needs d + 2 >= 4 entries")

    @property
    def d(self) -> int:
        return len(self.alpha) - 2

    @property
    def time(self) -> int:
        return self.alpha[0]

    @property
    def horizontal(self) -> Tuple[int, ...]:
        return self.alpha[1:self.d]

    @property
    def normal(self) -> int:
        return self.alpha[self.d]

    @property
    def weighted_normal(self) -> int:
        return self.alpha[self.d + 1]

    @property
    def weight(self) -> int:
        """⟨α⟩ = Σ_{j<d} α_j + 2α_d + α_{d+1}."""
        return sum(self.alpha[:self.d]) + 2 * self.normal + self.weighted_normal

    def __str__(self) -> str:
        return "(" + ",".join(str(a) for a in self.alpha) + ")"


def tangential_multi_indices(m: int, d: int, normal: bool = True) -> Iterator[TangentialMultiIndex]:
    """All α with ⟨α⟩ <= m; `normal=False` drops the plain normal slot (the 𝒯^α family)."""
    for alpha in itertools.product(range(m + 1), repeat=d + 2):
        idx = TangentialMultiIndex(alpha)
        if idx.weight > m or (not normal and idx.normal):
            continue
        yield idx


def _centered_weights(order: int) -> Tuple[np.ndarray, int]:
    """Weights of the narrowest centred stencil for d^order/dt^order (unit spacing)."""
    r = max(1, ceil(order / 2))
    nodes = np.arange(-r, r + 1, dtype=float)
    V = np.vander(nodes, increasing=True).T
    rhs = np.zeros(len(nodes))
    rhs[order] = factorial(order)
    return np.linalg.solve(V, rhs), r


def time_derivative(levels: Sequence[np.ndarray], order: int, dt: float) -> np.ndarray:
    """∂_t^order at the middle level of an odd-length history."""
    if order == 0:
        return np.asarray(levels[len(levels) // 2])
    if len(levels) % 2 == 0:
        raise MissingHistory(f"need an odd number of time levels, got {len(levels)}")
    w, r = _centered_weights(order)
    mid = len(levels) // 2
    if mid < r:
        raise MissingHistory(f"∂_t^{order} needs {2 * r + 1} time levels, got {len(levels)}")
    return sum(c * np.asarray(levels[mid + j]) for c, j in zip(w, range(-r, r + 1))) / dt ** order


def _spatial(f: np.ndarray, idx: TangentialMultiIndex, grid: SlabGrid, sign: int) -> np.ndarray:
    out = f
    for axis, n in enumerate(idx.horizontal):
        if n:
            out = grid.d_h(out, axis, n)
    if idx.normal:
        out = grid.d3(out, sign, idx.normal)
    if idx.weighted_normal:
        omega = AnisotropicWeight(grid.H)(grid.vertical[sign].x3)
        for _ in range(idx.weighted_normal):
            out = omega * grid.d3(out, sign)
    return out


def apply_multi_index(history: Sequence[np.ndarray], idx: TangentialMultiIndex, grid: SlabGrid, sign: int,
                      dt: float = 1.0) -> np.ndarray:
    return _spatial(time_derivative(history, idx.time, dt), idx, grid, sign)


def _as_history(f, static: bool) -> List[np.ndarray]:
    if static:
        return [np.asarray(f)]
    return [np.asarray(x) for x in f]


def anisotropic_norm(f, grid: SlabGrid, sign: int, m: int, dt: float = 1.0, static: bool = False) -> float:
    """
    ‖f‖_{H_*^m} = sqrt(Σ_{⟨α⟩<=m} ‖∂_*^α f‖²). `f` is a history of time levels (the middle one
    being evaluated) unless `static`, in which case every time derivative vanishes.
    """
    if m > 4:
        raise ValueError("anisotropic norms are supported up to m = 4")
    history = _as_history(f, static)
    if history[0].shape != grid.shape:
        raise GridMismatch(f"field shape {history[0].shape} does not match grid {grid.shape}", "norms")
    total = 0.0
    for idx in tangential_multi_indices(m, grid.d):
        if idx.time and static:
            continue
        g = apply_multi_index(history, idx, grid, sign, dt)
        total += grid.integrate(g ** 2, sign)
    return float(np.sqrt(total))


def standard_h_norm(f: np.ndarray, grid: SlabGrid, sign: int, m: int) -> float:
    """Full Sobolev norm counting every spatial derivative (normal ones included) at weight 1."""
    total = 0.0
    for beta in itertools.product(range(m + 1), repeat=grid.d):
        if sum(beta) > m:
            continue
        g = f
        for axis, n in enumerate(beta[:-1]):
            if n:
                g = grid.d_h(g, axis, n)
        if beta[-1]:
            g = grid.d3(g, sign, beta[-1])
        total += grid.integrate(g ** 2, sign)
    return float(np.sqrt(total))


def energy_weight_exponent(k: int, alpha0: int, l: int) -> float:
    """Power of 𝔉_p multiplying p in the (k, α0, l) term: (k + α0 - l - 3)_+ / 2."""
    return max(k + alpha0 - l - 3, 0) / 2.0


@dataclass
class PhaseHistory:
    """Odd-length time history of (v, b, S, p) on one phase; vectors carry components first."""
    sign: int
    v: Sequence[np.ndarray]
    b: Sequence[np.ndarray]
    S: Sequence[np.ndarray]
    p: Sequence[np.ndarray]
    dt: float = 1.0

    def levels(self) -> int:
        return len(self.p)


def manufactured_history(grid: SlabGrid, sign: int, levels: int = 5, dt: float = 0.1,
                         decay: float = 5.0) -> PhaseHistory:
    """Smooth travelling-wave history centred on t = 0, decaying away from Σ; p stays near 1/2."""
    if levels % 2 == 0:
        raise MissingHistory(f"need an odd number of time levels, got {levels}")
    coords = grid.coords(sign)
    x1, x3 = coords[0], coords[-1]
    damp = np.exp(-np.abs(x3) / decay)
    ts = [dt * (j - levels // 2) for j in range(levels)]
    pad = lambda first, rest: np.stack([first] + [rest] * (grid.d - 1))
    return PhaseHistory(
        sign,
        v=[pad(0.1 * np.cos(x1 + t) * damp, 0.05 * np.sin(x1) * damp) for t in ts],
        b=[pad(1.0 + 0.1 * np.sin(x1 - t) * damp, 0.2 * damp) for t in ts],
        S=[0.1 * np.cos(x1 + 2 * t) * damp for t in ts],
        p=[0.5 + 0.1 * np.sin(x1 + t) * damp for t in ts],
        dt=dt,
    )


def manufactured_interface(grid: SlabGrid, levels: int = 5, dt: float = 0.1) -> List[np.ndarray]:
    x = grid.horizontal.coords[0]
    return [0.1 * np.sin(x + dt * (j - levels // 2)) for j in range(levels)]


def energy_layer(phases: Sequence[PhaseHistory], psi: Sequence[np.ndarray], grid: SlabGrid, eos: EosParams,
                 sigma: float, l: int, base_order: int = BASE_ORDER, psi_dt: Optional[float] = None
                 ) -> Dict[str, Any]:
    """
    Layer l of the energy at base order N:
      Σ± Σ_{⟨α⟩=2l} Σ_{k<=N-l} ‖ε^{2l} 𝒯^α ∂_t^k (v, b, S, 𝔉_p^{e} p)‖²_{N-k-l}
      + Σ_{k<=N+l} |√σ ε^{2l} ∂_t^k ψ|²_{N+1+l-k},
    with e = (k + α0 - l - 3)_+/2 and 𝒯^α free of plain normal derivatives. `weights` lists the
    (k, α0, l, e) rows actually applied.
    """
    if not 0 <= l <= base_order:
        raise ValueError(f"layer l={l} outside 0..{base_order}")
    eps_w = eos.eps ** (2 * l)
    interior = 0.0
    weights = set()
    for ph in phases:
        F_p = [log_density_p_derivative(p, S, eos) for p, S in zip(ph.p, ph.S)]
        for idx in tangential_multi_indices(2 * l, grid.d, normal=False):
            if idx.weight != 2 * l:
                continue
            for k in range(base_order - l + 1):
                e = energy_weight_exponent(k, idx.time, l)
                weights.add((k, idx.time, l, e))
                weighted_p = [fp ** e * p for fp, p in zip(F_p, ph.p)]
                order = idx.time + k
                fields = [weighted_p, ph.S] + [[lvl[i] for lvl in ph.v] for i in range(grid.d)] \
                    + [[lvl[i] for lvl in ph.b] for i in range(grid.d)]
                for hist in fields:
                    g = time_derivative(hist, order, ph.dt)
                    g = _spatial(g, idx, grid, ph.sign)
                    interior += eps_w ** 2 * standard_h_norm(g, grid, ph.sign, base_order - k - l) ** 2
    boundary = 0.0
    if sigma > 0:
        dt = psi_dt if psi_dt is not None else (phases[0].dt if phases else 1.0)
        for k in range(base_order + l + 1):
            g = time_derivative(psi, k, dt)
            boundary += sigma * eps_w ** 2 * grid.horizontal.sobolev_norm_sq(g, base_order + 1 + l - k)
    report = {"layer": l, "interior": interior, "boundary": boundary, "total": interior + boundary,
              "weights": sorted(weights)}
    logger.debug(f"Energy layer {l}: total {report['total']:.4g} with {len(weights)} weight rows")
    return report


def boundary_layer_family(deltas: Sequence[float] = (0.5, 0.1, 0.02)) -> Dict[str, Callable]:
    family = {"constant": lambda x, x3: np.ones_like(x3)}
    for k in (1, 2, 4, 8):
        family[f"sin_k{k}"] = (lambda k: lambda x, x3: np.sin(k * x) + 0 * x3)(k)
    for delta in deltas:
        family[f"layer_{delta:g}"] = (lambda dl: lambda x, x3: np.exp(-np.abs(x3) / dl) + 0 * x)(delta)
    return family


def embedding_spot_check(grid: SlabGrid, family: Optional[Mapping[str, Callable]] = None, sign: int = 1,
                         m: int = 3) -> Dict[str, Dict[str, float]]:
    """
    ‖u‖_∞ / ‖u‖_{H_*^m} and ‖u‖_{H_*^m} / ‖u‖_{H^m} for each (x1, x3) -> u test function.
    """
    family = family or boundary_layer_family()
    coords = grid.coords(sign)
    x, x3 = coords[0], coords[-1]
    rows = {}
    for name, fn in family.items():
        u = np.asarray(fn(x, x3), dtype=float) * np.ones(grid.shape)
        star = anisotropic_norm(u, grid, sign, m, static=True)
        full = standard_h_norm(u, grid, sign, m)
        rows[name] = {"sup_over_star": float(np.max(np.abs(u))) / star,
                      "star": star, "full": full, "star_over_full": star / full}
    worst = max(r["sup_over_star"] for r in rows.values())
    logger.info(f"Embedding spot check: max sup/H_*^{m} ratio {worst:.4g} over {len(rows)} functions")
    return rows


def energy_layer_sweep(phases: Sequence[PhaseHistory], psi: Sequence[np.ndarray], grid: SlabGrid,
                       eos: EosParams, sigma: float, eps_values: Sequence[float],
                       layers: Optional[Sequence[int]] = None, base_order: int = BASE_ORDER
                       ) -> Tuple[List[Dict], Dict[int, float]]:
    """
    Layer totals over an ε sweep with the fields held fixed, and the log-log slope of each
    layer in ε; the weight ε^{2l} makes the slope 4l whenever no 𝔉_p power enters.
    """
    rows, slopes = [], {}
    for l in (range(base_order + 1) if layers is None else layers):
        totals = []
        for eps in eps_values:
            report = energy_layer(phases, psi, grid, eos.with_eps(eps), sigma, l, base_order)
            rows.append({"l": l, "eps": float(eps), **{k: report[k] for k in ("interior", "boundary", "total")}})
            totals.append(report["total"])
        logs = np.log(np.maximum(np.asarray(totals), 1e-300))
        slopes[l] = float(np.polyfit(np.log(np.asarray(eps_values, dtype=float)), logs, 1)[0])
    logger.info(f"Energy layer ε-slopes: {slopes}")
    return rows, slopes
