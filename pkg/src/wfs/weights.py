"""Closed-form weights, weight families and the o-condition.

Weights carry exact partial derivatives (via sympy), because the o-condition
and the derivative-domination hypothesis are global statements that must be
probed beyond any fixed working grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp

from wfs.core.grid import Grid
from wfs.core.multiindex import MultiIndex
from wfs.errors import (DimensionMismatch, InvalidEpsilon, MissingStrategy, NonpositiveCoefficient,
                        NoPositiveMember, NotDominatable, OrderUnavailable)

MAX_ORDER = 8


class Weight:
    """Nonnegative closed-form function on R^n with partial derivative evaluators."""

    dimension: int
    label: str = "weight"
    params: dict
    max_order: int = MAX_ORDER

    def __call__(self, points) -> np.ndarray:
        return self.partial(MultiIndex.zero(self.dimension), points)

    def partial(self, alpha, points) -> np.ndarray:
        raise NotImplementedError

    def on_grid(self, grid: Grid) -> np.ndarray:
        """Values at the grid nodes; cached per grid (weights are immutable)."""
        cache = self.__dict__.setdefault("_grid_cache", {})
        if grid not in cache:
            vals = self._evaluate_on_grid(grid)
            vals.setflags(write=False)
            cache[grid] = vals
        return cache[grid]

    def _evaluate_on_grid(self, grid: Grid) -> np.ndarray:
        return self(grid.mesh())

    def partial_on_grid(self, alpha, grid: Grid) -> np.ndarray:
        return self.partial(alpha, grid.mesh())

    def _check_alpha(self, alpha) -> MultiIndex:
        alpha = MultiIndex.coerce(alpha)
        if len(alpha) != self.dimension:
            raise DimensionMismatch(f"{alpha} for a {self.dimension}-D weight")
        if alpha.order() > self.max_order:
            raise OrderUnavailable(f"{self.label}: order {alpha.order()} > {self.max_order}")
        return alpha

    def __repr__(self):
        return f"<Weight {self.label} n={self.dimension}>"


class SymbolicWeight(Weight):
    def __init__(self, expr, symbols: Sequence[sp.Symbol], label: str = "", params=None,
                 max_order: int = MAX_ORDER):
        self.expr = sp.sympify(expr)
        self.symbols = tuple(symbols)
        self.dimension = len(self.symbols)
        self.label = label or str(self.expr)
        self.params = dict(params or {})
        self.max_order = max_order
        self._funcs: dict = {}

    def _func(self, alpha: MultiIndex) -> Callable:
        if alpha not in self._funcs:
            e = self.expr
            for s, a in zip(self.symbols, alpha):
                if a:
                    e = sp.diff(e, s, a)
            self._funcs[alpha] = sp.lambdify(self.symbols, e, modules="numpy")
        return self._funcs[alpha]

    def partial(self, alpha, points) -> np.ndarray:
        alpha = self._check_alpha(alpha)
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dimension:
            raise DimensionMismatch(f"points of dimension {pts.shape[-1]} for {self.label}")
        with np.errstate(all="ignore"):
            out = self._func(alpha)(*(pts[..., i] for i in range(self.dimension)))
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()


class SumWeight(Weight):
    """r_1 f_1 + ... + r_k f_k."""

    def __init__(self, weights: Sequence[Weight], coefficients: Sequence[float], label: str = ""):
        self.weights = tuple(weights)
        self.coefficients = tuple(float(c) for c in coefficients)
        self.dimension = self.weights[0].dimension
        self.max_order = min(w.max_order for w in self.weights)
        self.label = label or " + ".join(f"{c:g}*{w.label}" for w, c in zip(self.weights, self.coefficients))
        self.params = {"form": "sum", "terms": [(c, w.params) for w, c in zip(self.weights, self.coefficients)]}

    def partial(self, alpha, points) -> np.ndarray:
        alpha = self._check_alpha(alpha)
        out = 0.0
        for w, c in zip(self.weights, self.coefficients):
            out = out + c * w.partial(alpha, points)
        return out


class TensorWeight(Weight):
    """(x, y) -> f1(x) f2(y) on a product domain."""

    def __init__(self, first: Weight, second: Weight):
        self.first = first
        self.second = second
        self.dimension = first.dimension + second.dimension
        self.max_order = min(first.max_order, second.max_order)
        self.label = f"({first.label})x({second.label})"
        self.params = {"form": "tensor", "factors": [first.params, second.params]}

    def partial(self, alpha, points) -> np.ndarray:
        alpha = self._check_alpha(alpha)
        n = self.first.dimension
        pts = np.asarray(points, dtype=float)
        a, b = MultiIndex(alpha.entries[:n]), MultiIndex(alpha.entries[n:])
        return self.first.partial(a, pts[..., :n]) * self.second.partial(b, pts[..., n:])

    def _evaluate_on_grid(self, grid: Grid) -> np.ndarray:
        return self.partial_on_grid(MultiIndex.zero(self.dimension), grid)

    def partial_on_grid(self, alpha, grid: Grid) -> np.ndarray:
        if grid.split != self.first.dimension:
            return self.partial(alpha, grid.mesh())
        alpha = self._check_alpha(alpha)
        n = self.first.dimension
        gu, gv = grid.blocks()
        return np.multiply.outer(self.first.partial_on_grid(alpha.entries[:n], gu),
                                 self.second.partial_on_grid(alpha.entries[n:], gv))


def _symbols(n: int):
    return sp.symbols(f"x0:{n}", real=True)


def constant(c: float = 1.0, n: int = 1) -> SymbolicWeight:
    if c < 0:
        raise ValueError("weights are nonnegative")
    return SymbolicWeight(sp.Float(c) if c != int(c) else sp.Integer(int(c)), _symbols(n),
                          label=f"{c:g}", params={"form": "constant", "c": c, "n": n})


def poly_radial(m: int, n: int = 1, r: float = 1.0) -> SymbolicWeight:
    """(1 + ||x||^2 / r^2)^m; the Schwartz family uses r = 1."""
    xs = _symbols(n)
    r2 = sum(x ** 2 for x in xs)
    inner = 1 + (r2 if r == 1 else r2 / sp.Float(r) ** 2)
    label = f"(1+|x|^2)^{m}" if r == 1 else f"(1+|x|^2/{r:g}^2)^{m}"
    return SymbolicWeight(inner ** m, xs, label=label, params={"form": "poly", "m": m, "n": n, "r": r})


def gaussian_bump(n: int = 1, s: float = 1.0) -> SymbolicWeight:
    xs = _symbols(n)
    return SymbolicWeight(sp.exp(-sum(x ** 2 for x in xs) / sp.Float(s) ** 2), xs,
                          label=f"gauss({s:g})", params={"form": "gaussian", "s": s, "n": n})


def compact_bump(center, radius: float, height: float = 1.0) -> SymbolicWeight:
    """height * exp(1 - 1/(1 - |x-c|^2/R^2)) inside the ball, 0 outside (max = height)."""
    center = [float(c) for c in center]
    xs = _symbols(len(center))
    u = sum((x - c) ** 2 for x, c in zip(xs, center)) / sp.Float(radius) ** 2
    expr = sp.Piecewise((sp.Float(height) * sp.exp(1 - 1 / (1 - u)), u < 1), (0, True))
    return SymbolicWeight(expr, xs, label=f"bump({center},{radius:g})",
                          params={"form": "bump", "center": center, "radius": radius, "height": height})


def axis_poly(ms: Sequence[int]) -> SymbolicWeight:
    """Product of axis polynomials prod_i (1 + x_i^2)^{m_i}."""
    xs = _symbols(len(ms))
    expr = sp.Mul(*[(1 + x ** 2) ** m for x, m in zip(xs, ms)])
    return SymbolicWeight(expr, xs, label="prod(1+x_i^2)^" + str(list(ms)),
                          params={"form": "axis-poly", "ms": list(ms)})


def weight_sum(weights: Sequence[Weight], coefficients: Sequence[float]) -> Weight:
    """Pointwise r_1 f_1 + ... + r_k f_k with summed derivative evaluators."""
    if not weights or len(weights) != len(coefficients):
        raise ValueError("need one positive coefficient per weight")
    if len({w.dimension for w in weights}) != 1:
        raise DimensionMismatch("weights of different dimensions")
    if any(c <= 0 for c in coefficients):
        raise NonpositiveCoefficient(f"coefficients must be > 0, got {list(coefficients)}")
    return SumWeight(weights, coefficients)


def tensor(f1: Weight, f2: Weight) -> TensorWeight:
    return TensorWeight(f1, f2)


def poly_degree(f: Weight) -> Optional[int]:
    """Largest radial-polynomial exponent m appearing in f (None if f is not built from them)."""
    p = f.params
    if p.get("form") == "poly":
        return p["m"]
    if p.get("form") == "constant":
        return 0
    if isinstance(f, SumWeight):
        degs = [poly_degree(w) for w in f.weights]
        return None if any(d is None for d in degs) else max(degs)
    return None


# -- families -----------------------------------------------------------


@dataclass
class WeightFamily:
    members: list
    sum_closed: bool = False
    scale_closed: bool = False
    o_strategy: Optional[Callable[[Weight], Weight]] = field(default=None, repr=False)
    name: str = "family"

    @property
    def dimension(self) -> int:
        return self.members[0].dimension

    def strategy(self, f: Weight) -> Weight:
        if self.o_strategy is None:
            raise MissingStrategy(f"family {self.name} has no o-strategy")
        return self.o_strategy(f)


def schwartz_family(n: int = 1, M: int = 2) -> WeightFamily:
    """Radial polynomials (1+|x|^2)^m, m = 0..M, with o-strategy m -> m+1."""
    members = [poly_radial(m, n) for m in range(M + 1)]

    def strategy(f: Weight) -> Weight:
        m = poly_degree(f)
        if m is None:
            raise MissingStrategy(f"{f.label} is not a radial-polynomial weight")
        return poly_radial(m + 1, n)

    return WeightFamily(members, sum_closed=True, scale_closed=True, o_strategy=strategy,
                        name=f"schwartz:{M}")


def constant_family(n: int = 1) -> WeightFamily:
    return WeightFamily([constant(1.0, n)], sum_closed=True, scale_closed=True, name="const")


def poly_family(m: int, n: int = 1) -> WeightFamily:
    """The single-member family {(1+|x|^2)^m} (preset "poly:m"); not o-complete by itself."""
    return WeightFamily([poly_radial(m, n)], scale_closed=True, name=f"poly:{m}")


def bump_family(centers, radius: float) -> WeightFamily:
    return WeightFamily([compact_bump(c, radius) for c in centers], sum_closed=True,
                        scale_closed=True, name="bumps")


# -- o-condition ----------------------------------------------------------


@dataclass(frozen=True)
class OCertificate:
    """f <= eps * g at every probed node with ||x||_inf > radius."""

    eps: float
    radius: float
    spacing: tuple
    r_max: float
    ok: bool = True

    def to_dict(self):
        return {"ok": True, "eps": self.eps, "radius": self.radius, "spacing": list(self.spacing),
                "r_max": self.r_max}


@dataclass(frozen=True)
class OFailure:
    eps: float
    reason: str
    r_max: float
    ok: bool = False

    def to_dict(self):
        return {"ok": False, "eps": self.eps, "reason": self.reason, "r_max": self.r_max}


def probe_grid(n: int, r_max: float, spacing: float, split: Optional[int] = None) -> Grid:
    return Grid.uniform([(-r_max, r_max)] * n, spacing, split=split)


def o_certify(f: Weight, g: Weight, eps: float, r_max: float, probe=None):
    """Smallest probed R with f <= eps g outside the sup-ball of radius R.

    ``probe`` is a Grid covering [-r_max, r_max]^n or a spacing (default r_max/200).
    Returns an OCertificate, or an OFailure when the violations reach the
    outermost probed shell.
    """
    if not eps > 0:
        raise InvalidEpsilon(f"eps must be positive, got {eps}")
    if f.dimension != g.dimension:
        raise DimensionMismatch("f and g have different dimensions")
    if probe is None:
        probe = r_max / 200.0
    if not isinstance(probe, Grid):
        split = f.first.dimension if isinstance(f, TensorWeight) else None
        probe = probe_grid(f.dimension, r_max, float(probe), split=split)
    fv, gv = f.on_grid(probe), g.on_grid(probe)
    norms = np.abs(probe.mesh()).max(axis=-1)
    violated = fv > eps * gv
    outer = norms.max()
    if not violated.any():
        return OCertificate(eps, 0.0, probe.spacing, r_max)
    radius = float(norms[violated].max())
    if radius >= outer - 1e-12 * max(outer, 1.0):
        return OFailure(eps, f"f > eps*g on the outermost probed shell |x|={outer:g}", r_max)
    return OCertificate(eps, radius, probe.spacing, r_max)


def tensor_o_strategy(F1: WeightFamily, F2: WeightFamily) -> Callable[[TensorWeight], TensorWeight]:
    """o-strategy on F1 (x) F2: f1 (x) f2 -> (f1 + g1) (x) (f2 + g2) with g_i = strategy_i(f_i)."""
    for F in (F1, F2):
        if F.o_strategy is None:
            raise MissingStrategy(f"family {F.name} has no o-strategy")
        if not F.sum_closed:
            raise MissingStrategy(f"family {F.name} is not sum-closed")

    def strategy(f: TensorWeight) -> TensorWeight:
        h1 = weight_sum([f.first, F1.strategy(f.first)], [1.0, 1.0])
        h2 = weight_sum([f.second, F2.strategy(f.second)], [1.0, 1.0])
        return TensorWeight(h1, h2)

    return strategy


def tensor_family(F1: WeightFamily, F2: WeightFamily) -> WeightFamily:
    members = [TensorWeight(a, b) for a in F1.members for b in F2.members]
    try:
        strategy = tensor_o_strategy(F1, F2)
    except MissingStrategy:
        strategy = None
    return WeightFamily(members, o_strategy=strategy, name=f"{F1.name}(x){F2.name}")


# -- derivative domination and compact infima --------------------------------


@dataclass(frozen=True)
class Domination:
    """Audit record: |d^alpha f| <= weight at every probed node."""

    f_label: str
    alpha: tuple
    weight: Weight
    member_index: int
    scale: float
    ratio: float
    r_max: float


def dominating_derivative(f: Weight, alpha, family: WeightFamily, r_max: float = 10.0,
                          spacing: Optional[float] = None) -> Domination:
    """Find g in the family (possibly scaled) with |d^alpha f| <= g on the probe box.

    A scaled member is only accepted if the ratio |d^alpha f| / g is not still
    increasing on the outermost probed shell.
    """
    alpha = f._check_alpha(alpha)
    if alpha.order() == 0:
        return Domination(f.label, tuple(alpha), f, -1, 1.0, 1.0, r_max)
    probe = probe_grid(f.dimension, r_max, spacing or r_max / 200.0)
    pts = probe.mesh()
    norms = np.abs(pts).max(axis=-1)
    df = np.abs(f.partial(alpha, pts))
    shell = norms >= 0.9 * r_max
    inside = (norms >= 0.7 * r_max) & ~shell
    scaled = []
    for i, g in enumerate(family.members):
        gv = g(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(df == 0, 0.0, df / gv)
        if not np.all(np.isfinite(ratio)):
            continue
        rmax = float(ratio.max())
        if rmax <= 1.0:
            return Domination(f.label, tuple(alpha), g, i, 1.0, rmax, r_max)
        growing = ratio[shell].max() > ratio[inside].max() * (1 + 1e-9)
        if family.scale_closed and not growing:
            scaled.append((i, g, rmax))
    if scaled:
        i, g, rmax = scaled[0]
        c = rmax * (1 + 1e-9)
        return Domination(f.label, tuple(alpha), SumWeight([g], [c]), i, c, rmax, r_max)
    raise NotDominatable(f"no member of {family.name} dominates d^{tuple(alpha)} {f.label}")


@dataclass(frozen=True)
class InfWitness:
    weight: Weight
    inf_value: float
    member_indices: tuple


def compact_inf_witness(F: WeightFamily, K, count: int = 41) -> InfWitness:
    """Finite sum f_K of members with min over the probed box K strictly positive."""
    grid = Grid(tuple(K), (count,) * len(K))
    pts = grid.mesh().reshape(-1, len(K))
    vals = [m(pts) for m in F.members]
    chosen: list[int] = []
    total = np.zeros(len(pts))
    for j in range(len(pts)):
        if total[j] > 0:
            continue
        pick = next((i for i, v in enumerate(vals) if v[j] > 0), None)
        if pick is None:
            raise NoPositiveMember(f"no member of {F.name} is positive at {pts[j]}")
        chosen.append(pick)
        total = total + vals[pick]
    members = [F.members[i] for i in chosen]
    weight = members[0] if len(members) == 1 else weight_sum(members, [1.0] * len(members))
    return InfWitness(weight, float(total.min()), tuple(chosen))
