"""Mollifiers, indicator convolutions, smooth cutoffs and the density pipeline.

Convolutions are direct sums over the mollifier support: for a node x,

    g(x) = sum_k w_k 1_B(x - k h),   w_k proportional to rho_eps(k h) h^n,

with the indicator evaluated analytically at the shifted points. Because the
shifts are whole multiples of the spacing, FD^alpha g is again a sum of
(discrete) kernel derivatives against the indicator, which is what the
derivative bound check exercises.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import sympy as sp
from scipy import integrate, optimize

from wfs.core.domain import DomainSpec, closed_inf_ball, full_space
from wfs.core.grid import Grid, GridFunction
from wfs.core.multiindex import MultiIndex, multi_indices
from wfs.core.seminorm import SeminormSpec, weighted_seminorm_c, weighted_seminorm_ckl
from wfs.errors import GridTooCoarse, HypothesisViolated, InvalidEpsilon, MissingStrategy, NotDominatable, QuadratureFailure
from wfs.weights import WeightFamily, dominating_derivative, o_certify

MASS_TOL = 1e-6
RESOLUTION = 8          # nodes per mollifier radius required by indicator_convolve
_U_MIN = 1.0 / 740.0    # below this, exp(-1/u) underflows to 0 in double precision


# -- the unit bump and its derivatives --------------------------------------


@lru_cache(maxsize=None)
def _bump_derivative(alpha: MultiIndex):
    """Vectorized x -> d^alpha exp(-1/(1-|x|^2)) on the open unit ball, 0 outside."""
    n = len(alpha)
    xs = sp.symbols(f"x0:{n}", real=True)
    expr = sp.exp(-1 / (1 - sum(x ** 2 for x in xs)))
    for x, a in zip(xs, alpha):
        if a:
            expr = sp.diff(expr, x, a)
    f = sp.lambdify(xs, expr, modules="numpy")

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        u = 1.0 - np.sum(pts * pts, axis=-1)
        out = np.zeros(pts.shape[:-1])
        inside = u > _U_MIN
        if inside.any():
            sub = pts[inside]
            with np.errstate(all="ignore"):
                vals = f(*(sub[:, i] for i in range(n)))
            out[inside] = np.broadcast_to(vals, sub.shape[:-1])
        return out

    return evaluate


def _sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _radial_mass_gauss(n: int, panels: int, nodes: int = 8) -> float:
    """Composite Gauss-Legendre value of int_{|x|<1} exp(-1/(1-|x|^2)) dx."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    r = (0.5 * (b - a) * t + 0.5 * (a + b)).ravel()
    ww = (0.5 * (b - a) * w).ravel()
    u = 1.0 - r * r
    vals = np.where(u > _U_MIN, np.exp(-1.0 / np.maximum(u, _U_MIN)), 0.0)
    return _sphere_area(n) * float(np.sum(ww * r ** (n - 1) * vals))


def _normalization(n: int) -> float:
    """c with c * int exp(-1/(1-|x|^2)) = 1, cross-checked by a second quadrature."""
    raw, _ = integrate.quad(lambda r: r ** (n - 1) * math.exp(-1.0 / (1.0 - r * r)) if r < 1 else 0.0,
                            0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    c = 1.0 / (_sphere_area(n) * raw)
    prev = None
    for panels in (4, 8, 16, 32, 64, 128, 256, 512, 1024):
        mass = c * _radial_mass_gauss(n, panels)
        if prev is not None and abs(mass - prev) < 1e-13:
            break
        prev = mass
    if abs(mass - 1.0) > MASS_TOL:
        raise QuadratureFailure(f"mollifier mass {mass!r} misses 1 by more than {MASS_TOL}")
    return c


def _l1_norm_1d(alpha: MultiIndex) -> float:
    f = _bump_derivative(alpha)
    g = lambda x: float(f(np.array([[x]]))[0])
    xs = np.linspace(-1.0, 1.0, 4001)
    ys = f(xs[:, None])
    cuts = [-1.0]
    nz = np.flatnonzero(ys != 0)
    for i, j in zip(nz[:-1], nz[1:]):
        if np.sign(ys[i]) != np.sign(ys[j]):
            # an exact zero sample between them is the root; otherwise bracket it
            cuts.append(xs[i + 1] if j > i + 1 else optimize.brentq(g, xs[i], xs[j], xtol=1e-15))
    cuts.append(1.0)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        part, _ = integrate.quad(g, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)
        total += abs(part)
    return total


def _l1_norm_2d(alpha: MultiIndex, r_panels: int = 200, t_panels: int = 64, nodes: int = 6) -> float:
    """Polar composite Gauss-Legendre over one quadrant (|d^alpha rho| has the
    reflection symmetries of the square because rho is radial)."""
    f = _bump_derivative(alpha)
    t, w = np.polynomial.legendre.leggauss(nodes)

    def rule(lo, hi, panels):
        e = np.linspace(lo, hi, panels + 1)
        a, b = e[:-1, None], e[1:, None]
        return (0.5 * (b - a) * t + 0.5 * (a + b)).ravel(), (0.5 * (b - a) * w).ravel()

    r, wr = rule(0.0, 1.0, r_panels)
    th, wt = rule(0.0, 0.5 * math.pi, t_panels)
    pts = np.stack([np.multiply.outer(r, np.cos(th)), np.multiply.outer(r, np.sin(th))], axis=-1)
    vals = np.abs(f(pts))
    return 4.0 * float(np.einsum("i,j,ij->", wr * r, wt, vals))


@lru_cache(maxsize=None)
def _unit_data(n: int, max_order: int) -> tuple[float, dict]:
    if n not in (1, 2):
        raise ValueError("mollifier L1 norms are implemented for n = 1 and n = 2")
    c = _normalization(n)
    norms = {}
    for alpha in multi_indices(n, max_order):
        raw = _l1_norm_1d(alpha) if n == 1 else _l1_norm_2d(alpha)
        norms[alpha] = c * raw
    return c, norms


@dataclass(frozen=True)
class Mollifier:
    """rho_eps(x) = eps^-n rho(x/eps), rho(x) = c exp(-1/(1-|x|^2)) on the unit ball."""

    n: int
    eps: float
    c: float
    max_order: int
    l1_norms: dict = field(repr=False, hash=False, compare=False)

    def __call__(self, points) -> np.ndarray:
        return self.partial(MultiIndex.zero(self.n), points)

    def partial(self, alpha, points) -> np.ndarray:
        alpha = MultiIndex.coerce(alpha)
        pts = np.asarray(points, dtype=float) / self.eps
        scale = self.c * self.eps ** (-self.n - alpha.order())
        return scale * _bump_derivative(alpha)(pts)

    def l1_norm(self, alpha) -> float:
        """||d^alpha rho||_{L1} of the unit mollifier."""
        return self.l1_norms[MultiIndex.coerce(alpha)]

    def derivative_bound(self, alpha) -> float:
        """eps^-|alpha| ||d^alpha rho||_{L1}, the sup bound of d^alpha (1_B * rho_eps)."""
        alpha = MultiIndex.coerce(alpha)
        return self.eps ** (-alpha.order()) * self.l1_norm(alpha)

    def mass(self, panels: int = 256) -> float:
        """Quadrature mass of rho_eps (scale invariant, so that of rho)."""
        return self.c * _radial_mass_gauss(self.n, panels)

    def discrete_kernel(self, spacing: Sequence[float]):
        """Integer offsets k with |k h| < eps and unit-sum weights ~ rho_eps(k h) h^n.

        Returns (offsets, weights, raw_mass) where raw_mass is the Riemann sum
        before renormalization.
        """
        h = np.asarray(spacing, dtype=float)
        reach = [int(math.ceil(self.eps / hi)) for hi in h]
        grids = np.meshgrid(*[np.arange(-k, k + 1) for k in reach], indexing="ij")
        offsets = np.stack([g.ravel() for g in grids], axis=-1)
        vals = self(offsets * h)
        keep = vals > 0
        offsets, vals = offsets[keep], vals[keep]
        raw = vals * float(np.prod(h))
        mass = float(raw.sum())
        return offsets, raw / mass, mass


def make_mollifier(n: int, eps: float, max_order: int = 3) -> Mollifier:
    if not eps > 0:
        raise InvalidEpsilon(f"mollifier radius must be positive, got {eps}")
    c, norms = _unit_data(n, max_order)
    return Mollifier(n, float(eps), c, max_order, norms)


# -- convolution against indicators -------------------------------------------


def _check_resolution(grid: Grid, m: Mollifier):
    coarse = [h for h in grid.spacing if h > m.eps / RESOLUTION * (1 + 1e-12)]
    if coarse:
        raise GridTooCoarse(f"spacing {max(coarse):g} exceeds eps/{RESOLUTION} = {m.eps / RESOLUTION:g}")


def indicator_convolve(B, m: Mollifier, grid: Grid) -> GridFunction:
    """(1_B * rho_eps) sampled on ``grid`` by direct summation over the kernel support.

    ``B`` is anything with a vectorized ``contains`` (DomainSpec or Region).
    Nodes whose whole kernel footprint lies in B (or outside B) get exactly
    1.0 (or 0.0), so plateaus are exact rather than equal up to rounding.
    """
    if grid.dimension != m.n:
        raise ValueError(f"{m.n}-D mollifier on a {grid.dimension}-D grid")
    _check_resolution(grid, m)
    offsets, weights, raw_mass = m.discrete_kernel(grid.spacing)
    # the shifted points x - k h are nodes of an index-aligned extension of the grid;
    # evaluating the indicator there once keeps g an exact discrete convolution
    reach = np.abs(offsets).max(axis=0)
    h = np.asarray(grid.spacing)
    ext_axes = [lo + np.arange(-k, c + k) * hi
                for (lo, _), c, k, hi in zip(grid.box, grid.counts, reach, h)]
    ext = np.stack(np.meshgrid(*ext_axes, indexing="ij"), axis=-1)
    ind = np.asarray(B.contains(ext), dtype=bool)
    g = np.zeros(grid.counts)
    hits = np.zeros(grid.counts, dtype=np.int64)
    for k, wk in zip(offsets, weights):
        sl = tuple(slice(int(r - kk), int(r - kk) + c) for r, kk, c in zip(reach, k, grid.counts))
        inside = ind[sl]
        g += wk * inside
        hits += inside
    g[hits == len(weights)] = 1.0
    g[hits == 0] = 0.0
    out = GridFunction(grid, full_space(grid.box), g, np.ones(grid.counts, dtype=bool))
    out.metadata.update({"eps": m.eps, "kernel_points": int(len(weights)), "raw_mass": raw_mass})
    return out


@dataclass
class BoundReport:
    alpha: tuple
    max_value: float
    bound: float
    tol: float
    passed: bool

    def to_dict(self):
        return {"alpha": list(self.alpha), "max": self.max_value, "bound": self.bound,
                "tol": self.tol, "passed": self.passed}


def derivative_bound_check(g: GridFunction, m: Mollifier, alpha) -> BoundReport:
    """max |FD^alpha g| against eps^-|alpha| ||d^alpha rho||_{L1}, slack 10 h^2."""
    alpha = MultiIndex.coerce(alpha)
    d = g.derivative(alpha)
    top = float(np.abs(d.values[d.mask]).max())
    h = max(g.grid.spacing)
    tol = 10.0 * h * h
    bound = m.derivative_bound(alpha)
    return BoundReport(tuple(alpha), top, bound, tol, top <= bound * (1 + tol))


def far_field_constant(m: Mollifier, alpha, tau) -> float:
    """2^(|alpha|-|tau|) ||d^(alpha-tau) rho||_{L1} for the radius-1/2 mollifier."""
    kappa = MultiIndex.coerce(alpha) - MultiIndex.coerce(tau)
    return 2.0 ** kappa.order() * m.l1_norm(kappa)


def boundary_constant(m: Mollifier, alpha, tau) -> float:
    """4^(|alpha|-|tau|) ||d^(alpha-tau) rho||_{L1}; the cutoff derivative bound is this
    times r2^(|alpha|-|tau|)."""
    kappa = MultiIndex.coerce(alpha) - MultiIndex.coerce(tau)
    return 4.0 ** kappa.order() * m.l1_norm(kappa)


# -- cutoffs ----------------------------------------------------------------------


@dataclass
class CutoffFunction:
    kind: str
    params: dict
    function: GridFunction

    @property
    def values(self) -> np.ndarray:
        return self.function.values[..., 0]

    def to_dict(self):
        return {"kind": self.kind, "params": self.params, "grid": self.function.grid.to_dict()}


def _block(grid: Grid, block: str) -> tuple[Grid, int, int]:
    """(block grid, first axis, number of axes) of the requested coordinate block."""
    if grid.split is None:
        return Grid(grid.box, grid.counts), 0, grid.dimension
    gu, gv = grid.blocks()
    if block == "first":
        return gu, 0, gu.dimension
    if block == "second":
        return gv, gu.dimension, gv.dimension
    raise ValueError(f"block must be 'first' or 'second', got {block!r}")


def _broadcast_block(values: np.ndarray, grid: Grid, start: int, count: int) -> np.ndarray:
    shape = [1] * grid.dimension
    shape[start:start + count] = values.shape
    return np.broadcast_to(values.reshape(shape), grid.counts).copy()


def far_field_cutoff(r: float, block: str, grid: Grid) -> CutoffFunction:
    """(1 of the closed sup-ball of radius r + 1/2) * rho_{1/2} in one coordinate block.

    Equal to 1 where the block sup-norm is <= r and 0 where it is > r + 1.
    """
    bg, start, count = _block(grid, block)
    m = make_mollifier(count, 0.5)
    g = indicator_convolve(closed_inf_ball(r + 0.5, count), m, bg)
    vals = _broadcast_block(g.values[..., 0], grid, start, count)
    fn = GridFunction(grid, full_space(grid.box), vals, np.ones(grid.counts, dtype=bool))
    return CutoffFunction("far-field", {"r": r, "block": block, "eps": 0.5}, fn)


def boundary_cutoff(r2: float, U: DomainSpec, grid: Grid, block: str = "first") -> CutoffFunction:
    """(1 of U_{3/(4 r2)}) * rho_{1/(4 r2)} in one coordinate block.

    Equal to 0 where d(x, boundary) < 1/(2 r2) and 1 where it is >= 1/r2.
    """
    bg, start, count = _block(grid, block)
    if U.dimension != count:
        raise ValueError("domain dimension does not match the coordinate block")
    eps = 1.0 / (4.0 * r2)
    m = make_mollifier(count, eps)
    g = indicator_convolve(U.shrink(3.0 * eps), m, bg)
    vals = _broadcast_block(g.values[..., 0], grid, start, count)
    fn = GridFunction(grid, full_space(grid.box), vals, np.ones(grid.counts, dtype=bool))
    return CutoffFunction("boundary", {"r2": r2, "block": block, "eps": eps}, fn)


def box_distance(points, K) -> np.ndarray:
    """Euclidean distance from each point to the box K."""
    pts = np.asarray(points, dtype=float)
    lo = np.array([k[0] for k in K])
    hi = np.array([k[1] for k in K])
    gap = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
    return np.sqrt(np.sum(gap * gap, axis=-1))


def urysohn_cutoff(K, margin: float, grid: Grid) -> CutoffFunction:
    """h(x) = clamp(1 - d(x, K)/margin, 0, 1): 1 on K, 0 at distance >= margin."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    vals = np.clip(1.0 - box_distance(grid.mesh(), K) / margin, 0.0, 1.0)
    fn = GridFunction(grid, full_space(grid.box), vals, np.ones(grid.counts, dtype=bool))
    return CutoffFunction("urysohn", {"K": [list(k) for k in K], "margin": margin}, fn)


@dataclass
class UrysohnReport:
    delta: float
    radius: float
    error: float
    bound: float
    passed: bool


def urysohn_approximation(gamma: GridFunction, f, g, q: SeminormSpec, tol: float,
                          margin: float = 1.0) -> UrysohnReport:
    """Cut gamma off outside K_delta with delta = tol / (2 ||gamma||_{g,q}).

    K_delta is the box of the o-certificate for f = o(g) at epsilon = delta,
    probed on gamma's own grid; the report checks ||h gamma - gamma||_{f,q} <= delta ||gamma||_{g,q}.
    """
    norm_g = weighted_seminorm_c(gamma, g, q)
    if norm_g == 0:
        return UrysohnReport(0.0, 0.0, 0.0, 0.0, True)
    delta = tol / (2.0 * norm_g)
    r_max = min(max(abs(lo), abs(hi)) for lo, hi in gamma.grid.box)
    cert = o_certify(f, g, delta, r_max, probe=Grid(gamma.grid.box, gamma.grid.counts))
    if not cert.ok:
        raise HypothesisViolated(f"no o-certificate at delta={delta:g}: {cert.reason}")
    K = [(-cert.radius, cert.radius)] * gamma.dimension
    h = urysohn_cutoff(K, margin, gamma.grid)
    err = weighted_seminorm_c(gamma.multiply(h.values) - gamma, f, q)
    bound = delta * norm_g
    return UrysohnReport(delta, cert.radius, err, bound, err <= bound)


# -- density pipeline ---------------------------------------------------------------


@dataclass
class ConvergenceTable:
    rows: list
    metadata: dict

    def columns(self) -> dict:
        """{(f_index, alpha, beta): [error at each radius, in radius order]}."""
        out: dict = {}
        for row in sorted(self.rows, key=lambda r: r["r"]):
            out.setdefault((row["f_index"], row["alpha"], row["beta"]), []).append(row["error"])
        return out

    def monotone(self, slack: float = 1e-12) -> bool:
        return all(b <= a + slack for col in self.columns().values() for a, b in zip(col, col[1:]))

    def final_max(self) -> float:
        last = max(row["r"] for row in self.rows)
        return max(row["error"] for row in self.rows if row["r"] == last)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "f_index", "alpha", "beta", "error"])
        for row in self.rows:
            w.writerow([repr(float(row["r"])), row["f_index"], " ".join(map(str, row["alpha"])),
                        " ".join(map(str, row["beta"])), repr(float(row["error"]))])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{**r, "alpha": list(r["alpha"]), "beta": list(r["beta"])} for r in self.rows]
        return json.dumps({"schema": 1, "metadata": self.metadata, "rows": rows}, sort_keys=True)


def check_family_hypotheses(F: WeightFamily, order: int, r_max: float = 40.0) -> list[dict]:
    """Conditions (i) and (ii) for a family: o-certificates at eps in {1, 0.1, 0.01}
    for each member against its o-strategy image, and derivative domination up to ``order``."""
    records = []
    for i, f in enumerate(F.members):
        try:
            g = F.strategy(f)
        except MissingStrategy as exc:
            raise HypothesisViolated(str(exc)) from exc
        for eps in (1.0, 0.1, 0.01):
            cert = o_certify(f, g, eps, r_max)
            if not cert.ok:
                raise HypothesisViolated(f"o-condition fails for {f.label} at eps={eps}: {cert.reason}")
            records.append({"member": i, "check": "o", "eps": eps, "radius": cert.radius})
        for alpha in multi_indices(f.dimension, order):
            try:
                dom = dominating_derivative(f, alpha, F)
            except NotDominatable as exc:
                raise HypothesisViolated(str(exc)) from exc
            records.append({"member": i, "check": "domination", "alpha": list(alpha),
                            "by": dom.member_index, "scale": dom.scale})
    return records


def _factors(gamma: GridFunction) -> tuple[DomainSpec, DomainSpec]:
    if gamma.domain.factors is not None:
        return gamma.domain.factors
    gu, gv = gamma.grid.blocks()
    return full_space(gu.box), full_space(gv.box)


def approximant(gamma: GridFunction, r: float) -> tuple[GridFunction, list[CutoffFunction]]:
    """Far-field cutoffs in both coordinate blocks and, for each block whose domain is a
    proper subset, a boundary cutoff with r2 = r, all multiplied onto gamma."""
    grid = gamma.grid
    du, dv = _factors(gamma)
    cutoffs = [far_field_cutoff(r, "first", grid), far_field_cutoff(r, "second", grid)]
    if not du.is_full_space:
        cutoffs.append(boundary_cutoff(r, du, grid, "first"))
    if not dv.is_full_space:
        cutoffs.append(boundary_cutoff(r, dv, grid, "second"))
    eta = np.ones(grid.counts)
    for c in cutoffs:
        eta = eta * c.values
    return gamma.multiply(eta), cutoffs


def _support_compact(approx: GridFunction, r: float) -> bool:
    """Support stays off the box edges and at distance >= 1/(2r) from a proper boundary."""
    nz = np.any(approx.values != 0, axis=-1) & approx.mask
    if not nz.any():
        return True
    edge = np.zeros(approx.grid.counts, dtype=bool)
    for ax in range(approx.dimension):
        idx = [slice(None)] * approx.dimension
        for end in (0, -1):
            idx[ax] = end
            edge[tuple(idx)] = True
    du, dv = _factors(approx)
    n = du.dimension
    pts = approx.grid.mesh()
    near = np.zeros_like(nz)
    for dom, sl in ((du, slice(0, n)), (dv, slice(n, None))):
        if not dom.is_full_space:
            near |= dom.boundary_distance(pts[..., sl]) < 1.0 / (2.0 * r)
    return not np.any(nz & edge) and not np.any(nz & near)


def density_pipeline(gamma: GridFunction, F1: WeightFamily, F2: WeightFamily, alpha_max: int,
                     beta_max: int, q: SeminormSpec, radii: Sequence[float],
                     check_hypotheses: bool = True) -> ConvergenceTable:
    """Errors ||gamma - approximant_r||_{f1 x f2,(alpha,beta),q} for each radius r."""
    if gamma.grid.split is None:
        raise ValueError("density_pipeline needs a product grid")
    hyp = []
    if check_hypotheses:
        hyp = check_family_hypotheses(F1, alpha_max) + check_family_hypotheses(F2, beta_max)
    gu, gv = gamma.grid.blocks()
    pairs = [(a, b) for a in F1.members for b in F2.members]
    alphas = multi_indices(gu.dimension, alpha_max)
    betas = multi_indices(gv.dimension, beta_max)
    rows, support = [], {}
    for r in radii:
        approx, _ = approximant(gamma, r)
        support[repr(float(r))] = _support_compact(approx, r)
        diff = gamma - approx
        for i, (f1, f2) in enumerate(pairs):
            for a in alphas:
                for b in betas:
                    err = weighted_seminorm_ckl(diff, f1, f2, a, b, q)
                    rows.append({"r": float(r), "f_index": i, "alpha": tuple(a), "beta": tuple(b),
                                 "error": err})
    meta = {"grid": gamma.grid.to_dict(), "weights": [f"{a.label}(x){b.label}" for a, b in pairs],
            "q": q.label(), "support_compact": support, "hypotheses": hyp}
    return ConvergenceTable(rows, meta)
