"""
Two-term symbols a = a^(m) + a^(m-1) in closed form (sympy) over the jets of ψ, with the
composition and adjoint calculus and the symmetrizer construction for the interface operator.

Symbols are expressions in ξ and the pointwise derivatives q = ∇̄ψ, r = ∇̄²ψ, s = ∇̄³ψ;
x'-derivatives follow from the chain rule q -> r -> s.
"""

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from src.errors import GridMismatch, UnsupportedDerivative
from src.paradiff import PLCutoffs, SpectralField, mean_curvature, para_apply, slope_fit
from src.spectral import HorizontalGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JetVariables:
    n: int
    q: Tuple[sp.Symbol, ...]
    r: Dict[Tuple[int, ...], sp.Symbol]
    s: Dict[Tuple[int, ...], sp.Symbol]
    xi: Tuple[sp.Symbol, ...]

    @property
    def jet_symbols(self) -> List[sp.Symbol]:
        return list(self.q) + list(self.r.values()) + list(self.s.values())

    @property
    def all(self) -> List[sp.Symbol]:
        return self.jet_symbols + list(self.xi)


@lru_cache(maxsize=None)
def jet_variables(n: int) -> JetVariables:
    q = tuple(sp.Symbol(f"q{a + 1}", real=True) for a in range(n))
    r = {key: sp.Symbol("r" + "".join(str(k + 1) for k in key), real=True)
         for key in itertools.combinations_with_replacement(range(n), 2)}
    s = {key: sp.Symbol("s" + "".join(str(k + 1) for k in key), real=True)
         for key in itertools.combinations_with_replacement(range(n), 3)}
    xi = tuple(sp.Symbol(f"xi{a + 1}", real=True) for a in range(n))
    return JetVariables(n, q, r, s, xi)


def x_derivative(expr, j: int, n: int):
    """∂_{x_j} of a jet expression by the chain rule."""
    v = jet_variables(n)
    expr = sp.sympify(expr)
    if expr.free_symbols & set(v.s.values()):
        raise UnsupportedDerivative("x'-derivatives of third-order jets need fourth derivatives of ψ")
    out = sum(sp.diff(expr, v.q[a]) * v.r[tuple(sorted((a, j)))] for a in range(n))
    out += sum(sp.diff(expr, sym) * v.s[tuple(sorted(key + (j,)))] for key, sym in v.r.items())
    return out


@dataclass(frozen=True, eq=False)
class PsiJets:
    """Spectral derivatives of ψ up to third order, keyed by the jet symbol names."""
    psi: SpectralField
    values: Dict[str, np.ndarray]

    @classmethod
    def from_field(cls, psi: SpectralField) -> "PsiJets":
        grid = psi.grid
        n = grid.dims
        v = jet_variables(n)
        vals: Dict[str, np.ndarray] = {}
        for a in range(n):
            vals[v.q[a].name] = grid.diff(psi.values, a)
        for key, sym in v.r.items():
            vals[sym.name] = grid.diff(grid.diff(psi.values, key[0]), key[1])
        for key, sym in v.s.items():
            vals[sym.name] = grid.diff(grid.diff(grid.diff(psi.values, key[0]), key[1]), key[2])
        return cls(psi, vals)

    @property
    def grid(self) -> HorizontalGrid:
        return self.psi.grid


class Symbol:
    """A symbol of order m with principal and sub-principal parts, bound to the jets of one ψ."""

    def __init__(self, order: float, principal, sub, n: int, jets: Optional[PsiJets] = None, tag: str = "custom"):
        self.order = float(order)
        self.principal = sp.sympify(principal)
        self.sub = sp.sympify(sub)
        self.n = int(n)
        self.jets = jets
        self.tag = tag
        self._vars = jet_variables(self.n)
        self._compiled: Dict[str, Callable] = {}

    def __repr__(self) -> str:
        return f"Symbol(tag={self.tag!r}, order={self.order:g}, n={self.n})"

    @classmethod
    def from_xi(cls, fn: Callable, order: float, n: int, tag: str = "multiplier") -> "Symbol":
        """An x'-independent symbol a(ξ) given as a function of the ξ symbols."""
        return cls(order, fn(jet_variables(n).xi), 0, n, None, tag)

    @property
    def depends_on_x(self) -> bool:
        jets = set(self._vars.jet_symbols)
        return bool((self.principal.free_symbols | self.sub.free_symbols) & jets)

    def _fn(self, part: str) -> Callable:
        if part not in self._compiled:
            expr = self.principal if part == "principal" else self.sub
            self._compiled[part] = sp.lambdify(self._vars.all, expr, modules="numpy", cse=True)
        return self._compiled[part]

    def _jet_args(self, shape, index=None) -> List[np.ndarray]:
        if self.jets is None:
            if self.depends_on_x:
                raise GridMismatch(f"{self!r} depends on ψ but carries no jets", "paradiff")
            return [np.zeros(shape)] * len(self._vars.jet_symbols)
        vals = self.jets.values
        out = []
        for sym in self._vars.jet_symbols:
            arr = vals[sym.name]
            out.append(arr.ravel()[index] if index is not None else arr)
        return out

    def evaluate(self, xi: Sequence, index=None) -> Tuple[np.ndarray, np.ndarray]:
        """
        (a^(m), a^(m-1)) at ξ. With `index` (flat grid indices) the jets are taken at those
        points and ξ must broadcast against it; otherwise over the whole ψ grid.
        """
        xi = [np.asarray(x, dtype=float) for x in xi]
        if len(xi) != self.n:
            raise GridMismatch(f"ξ has {len(xi)} components, symbol expects {self.n}", "paradiff")
        if index is not None:
            shape = np.broadcast(np.asarray(index), *xi).shape
        elif self.jets is not None:
            shape = self.jets.grid.shape
        else:
            shape = np.broadcast(*xi).shape
        args = self._jet_args(shape, index) + xi
        principal = np.broadcast_to(np.asarray(self._fn("principal")(*args), dtype=complex), shape)
        sub = np.broadcast_to(np.asarray(self._fn("sub")(*args), dtype=complex), shape)
        return principal, sub

    def sample(self, grid: HorizontalGrid, eta: Sequence[int]) -> np.ndarray:
        """Full two-term symbol over the grid at a fixed input frequency η."""
        if self.jets is not None and (self.jets.grid.Nh != grid.Nh or self.jets.grid.dims != grid.dims):
            raise GridMismatch(f"symbol built on Nh={self.jets.grid.Nh}, applied on Nh={grid.Nh}", "paradiff")
        if self.jets is None:
            p, s = self.evaluate([np.full(grid.shape, float(e)) for e in eta])
        else:
            p, s = self.evaluate([float(e) for e in eta])
        return p + s

    def sample_table(self, index: np.ndarray, xi: np.ndarray) -> List[Dict]:
        p, s = self.evaluate(list(xi), index=index)
        return [{"point": int(i), "xi": [float(x) for x in xi[:, k]],
                 "principal": [float(p[k].real), float(p[k].imag)], "sub": [float(s[k].real), float(s[k].imag)]}
                for k, i in enumerate(np.asarray(index))]


def _common_jets(a: Symbol, b: Symbol) -> Optional[PsiJets]:
    if a.n != b.n:
        raise GridMismatch(f"symbols act on different dimensions ({a.n} vs {b.n})", "paradiff")
    if a.jets is not None and b.jets is not None and a.jets is not b.jets:
        if not np.array_equal(a.jets.psi.values, b.jets.psi.values):
            raise GridMismatch("symbols are built from different interfaces", "paradiff")
    return a.jets if a.jets is not None else b.jets


def symbol_compose(a: Symbol, b: Symbol, r: float = 2.0) -> Symbol:
    """
    a#b to two orders: a^(m)b^(m') + a^(m-1)b^(m') + a^(m)b^(m'-1) + (1/i)∂_ξ a^(m)·∂_x b^(m').
    The derivative term needs x'-regularity r > 1.
    """
    jets = _common_jets(a, b)
    v = jet_variables(a.n)
    principal = a.principal * b.principal
    sub = a.sub * b.principal + a.principal * b.sub
    if r > 1:
        sub += -sp.I * sum(sp.diff(a.principal, v.xi[j]) * x_derivative(b.principal, j, a.n) for j in range(a.n))
    return Symbol(a.order + b.order, principal, sub, a.n, jets, f"{a.tag}#{b.tag}")


def symbol_adjoint(a: Symbol) -> Symbol:
    """a* = conj(a^(m)) + conj(a^(m-1)) + (1/i)∂_x·∂_ξ conj(a^(m))."""
    v = jet_variables(a.n)
    conj = sp.conjugate(a.principal)
    sub = sp.conjugate(a.sub) - sp.I * sum(x_derivative(sp.diff(conj, v.xi[j]), j, a.n) for j in range(a.n))
    return Symbol(a.order, conj, sub, a.n, a.jets, f"{a.tag}*")


def _basics(n: int):
    v = jet_variables(n)
    nu = 1 + sum(q ** 2 for q in v.q)
    xi2 = sum(x ** 2 for x in v.xi)
    qxi = sum(q * x for q, x in zip(v.q, v.xi))
    lam1 = sp.sqrt(nu * xi2 - qxi ** 2)
    return v, nu, xi2, qxi, lam1


def _lambda0_lower(n: int):
    """Λ^(0),- = (ν / (2Λ^(1))) (Σ_j ∂_j(α q_j) + i ∂_ξΛ^(1)·∇̄α) with α = (Λ^(1) + i q·ξ)/ν."""
    v, nu, _, qxi, lam1 = _basics(n)
    alpha = (lam1 + sp.I * qxi) / nu
    total = sum(x_derivative(alpha * v.q[j], j, n) for j in range(n))
    total += sp.I * sum(sp.diff(lam1, v.xi[j]) * x_derivative(alpha, j, n) for j in range(n))
    return nu / (2 * lam1) * total


def symbol_dtn(psi: SpectralField, sign: int, jets: Optional[PsiJets] = None) -> Symbol:
    """Λ^± = Λ^(1) + Λ^(0),± with Λ^(0),+ = -conj(Λ^(0),-)."""
    n = psi.grid.dims
    jets = jets or PsiJets.from_field(psi)
    _, _, _, _, lam1 = _basics(n)
    lam0 = _lambda0_lower(n)
    sub = lam0 if sign < 0 else -sp.conjugate(lam0)
    return Symbol(1, lam1, sub, n, jets, "dtn+" if sign > 0 else "dtn-")


def symbol_dtn_total(psi: SpectralField, jets: Optional[PsiJets] = None) -> Symbol:
    """Λ = Λ^+ + Λ^-, the symbol of 𝔑⁺ + 𝔑⁻."""
    n = psi.grid.dims
    jets = jets or PsiJets.from_field(psi)
    _, _, _, _, lam1 = _basics(n)
    lam0 = _lambda0_lower(n)
    return Symbol(1, 2 * lam1, lam0 - sp.conjugate(lam0), n, jets, "dtn")


def symbol_curvature(psi: SpectralField, jets: Optional[PsiJets] = None) -> Symbol:
    """𝔥 = 𝔥^(2) + 𝔥^(1) with 𝔥^(1) = -(i/2)(∇̄_x·∂_ξ)𝔥^(2)."""
    n = psi.grid.dims
    jets = jets or PsiJets.from_field(psi)
    v, nu, xi2, qxi, _ = _basics(n)
    h2 = (xi2 - qxi ** 2 / nu) / sp.sqrt(nu)
    h1 = -sp.I / 2 * sum(x_derivative(sp.diff(h2, v.xi[j]), j, n) for j in range(n))
    return Symbol(2, h2, h1, n, jets, "curvature")


def symbol_symmetrizers(psi: SpectralField, s: float = 4.0, jets: Optional[PsiJets] = None
                        ) -> Tuple[Symbol, Symbol, Symbol]:
    """(𝔪, 𝔫, 𝔐) with 𝔪^(1.5) = sqrt(𝔥^(2)Λ^(1)), 𝔫 = 2^{-1/3}ν^{-1/4}, 𝔐 = (𝔪^(1.5))^{(2s-1)/3}."""
    if s <= 1:
        raise ValueError(f"Sobolev index s={s} must exceed 1")
    n = psi.grid.dims
    jets = jets or PsiJets.from_field(psi)
    v, nu, xi2, qxi, lam1 = _basics(n)
    h2 = (xi2 - qxi ** 2 / nu) / sp.sqrt(nu)
    m15 = sp.sqrt(h2 * 2 * lam1)
    m05 = 1 / (2 * sp.I) * sum(sp.diff(x_derivative(m15, j, n), v.xi[j]) for j in range(n))
    m = Symbol(1.5, m15, m05, n, jets, "m")
    nn = Symbol(0, 2 ** sp.Rational(-1, 3) * nu ** sp.Rational(-1, 4), 0, n, jets, "n")
    big_m = Symbol(s - 0.5, m15 ** (sp.Float(2 * s - 1) / 3), 0, n, jets, "M")
    return m, nn, big_m


def sample_points(jets: PsiJets, count: int, seed: int = 0, radius=(0.5, 4.0)) -> Tuple[np.ndarray, np.ndarray]:
    """Random grid points and frequencies with |ξ| in the given range."""
    rng = np.random.default_rng(seed)
    n = jets.grid.dims
    index = rng.integers(0, int(np.prod(jets.grid.shape)), count)
    direction = rng.normal(size=(n, count))
    direction /= np.linalg.norm(direction, axis=0)
    return index, direction * rng.uniform(*radius, count)


def homogeneity_residual(sym: Symbol, index: np.ndarray, xi: np.ndarray, t: float = 2.0) -> float:
    """max |a^(m)(x, tξ) - t^m a^(m)(x, ξ)| relative to |t^m a^(m)|."""
    base, _ = sym.evaluate(list(xi), index=index)
    scaled, _ = sym.evaluate(list(t * xi), index=index)
    denom = np.maximum(np.abs(t ** sym.order * base), 1e-300)
    return float(np.max(np.abs(scaled - t ** sym.order * base) / denom))


def real_to_real_residual(sym: Symbol, u: SpectralField, cutoffs: Optional[PLCutoffs] = None) -> float:
    """Relative imaginary part of T_a u for a real input, before it is discarded."""
    complex_u = SpectralField(u.grid, u.values.astype(complex))
    return para_apply(sym, complex_u, cutoffs).hermitian_defect()


def curvature_factorization_residual(psi: SpectralField, count: int = 1000, seed: int = 0) -> float:
    """max |𝔥^(2) - (cΛ^(1))²| with c = (1/2)(1+|∇̄ψ|²)^{-3/4} and Λ^(1) the summed symbol."""
    jets = PsiJets.from_field(psi)
    n = psi.grid.dims
    v, nu, _, _, lam1 = _basics(n)
    c = sp.Rational(1, 2) * nu ** sp.Rational(-3, 4)
    factored = Symbol(2, (c * 2 * lam1) ** 2, 0, n, jets, "factored")
    index, xi = sample_points(jets, count, seed)
    h2, _ = symbol_curvature(psi, jets).evaluate(list(xi), index=index)
    f2, _ = factored.evaluate(list(xi), index=index)
    return float(np.max(np.abs(h2 - f2)))


def symmetrization_residual(psi: SpectralField, count: int = 1000, seed: int = 0, s: float = 4.0) -> Dict[str, float]:
    """
    Symbol-level defect of 𝔫#(Λ#𝔥) - (𝔪#𝔪)#𝔫 at random (x', ξ): the order-3 and order-2
    components, Re 𝔪^(0.5) and the curvature factorisation.
    """
    jets = PsiJets.from_field(psi)
    lam = symbol_dtn_total(psi, jets)
    h = symbol_curvature(psi, jets)
    m, nn, _ = symbol_symmetrizers(psi, s, jets)
    left = symbol_compose(nn, symbol_compose(lam, h))
    right = symbol_compose(symbol_compose(m, m), nn)
    index, xi = sample_points(jets, count, seed)
    lp, ls = left.evaluate(list(xi), index=index)
    rp, rs = right.evaluate(list(xi), index=index)
    _, m05 = m.evaluate(list(xi), index=index)
    report = {
        "order3": float(np.max(np.abs(lp - rp))),
        "order2": float(np.max(np.abs(ls - rs))),
        "re_m05": float(np.max(np.abs(m05.real))),
        "factorization": curvature_factorization_residual(psi, count, seed),
        "samples": count,
    }
    logger.debug(f"Symbol symmetrization residual: {report}")
    return report


def symmetrization_operator_residual(psi: SpectralField, ks: Sequence[int] = (32, 64, 128),
                                     cutoffs: Optional[PLCutoffs] = None, s: float = 4.0) -> Dict:
    """
    T_𝔫T_ΛT_𝔥 u_k - T_𝔪T_𝔪T_𝔫 u_k for u_k = cos(k x1): slopes of the residual and of the
    individual terms under frequency scaling, and the measured order gain.
    """
    cutoffs = cutoffs or PLCutoffs()
    jets = PsiJets.from_field(psi)
    lam = symbol_dtn_total(psi, jets)
    h = symbol_curvature(psi, jets)
    m, nn, _ = symbol_symmetrizers(psi, s, jets)
    grid = psi.grid
    term_norms, res_norms = [], []
    for k in ks:
        u = SpectralField.from_function(grid, lambda *x: np.cos(k * x[0]))
        lhs = para_apply(nn, para_apply(lam, para_apply(h, u, cutoffs), cutoffs), cutoffs)
        rhs = para_apply(m, para_apply(m, para_apply(nn, u, cutoffs), cutoffs), cutoffs)
        term_norms.append(lhs.l2_norm())
        res_norms.append((lhs - rhs).l2_norm())
    term_slope = slope_fit(ks, term_norms)
    res_slope = slope_fit(ks, res_norms)
    relative = [r / t for r, t in zip(res_norms, term_norms)]
    report = {"ks": list(ks), "term_norms": term_norms, "residual_norms": res_norms, "relative": relative,
              "term_slope": term_slope, "residual_slope": res_slope, "gain": term_slope - res_slope}
    logger.info(f"Operator symmetrization: gain {report['gain']:.3f} over k={list(ks)}")
    return report


def curvature_paralinearization(psi: SpectralField, ks: Sequence[int] = (16, 32, 64), amplitude: float = 1e-6,
                                cutoffs: Optional[PLCutoffs] = None) -> Dict:
    """
    Increments of r(ψ) = ℋ(ψ) + T_𝔥ψ and of T_𝔥ψ under ψ -> ψ + δ cos(k x1): the remainder
    should grow at least one order slower in k.
    """
    cutoffs = cutoffs or PLCutoffs()

    def parts(field: SpectralField):
        Th = para_apply(symbol_curvature(field), field, cutoffs)
        return Th, mean_curvature(field) + Th

    base_T, base_r = parts(psi)
    main, rem = [], []
    for k in ks:
        bumped = psi + SpectralField.from_function(psi.grid, lambda *x: amplitude * np.cos(k * x[0]))
        T, r = parts(bumped)
        main.append((T - base_T).l2_norm())
        rem.append((r - base_r).l2_norm())
    gain = slope_fit(ks, main) - slope_fit(ks, rem)
    report = {"ks": list(ks), "main": main, "remainder": rem, "gain": gain}
    logger.debug(f"Curvature paralinearization: {report}")
    return report
