"""Multi-index calculus on grid functions: product rules, Taylor bounds,
extension by zero, weak integrals and finite limit-closure checks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from wfs.core.domain import full_space
from wfs.core.grid import Grid, GridFunction
from wfs.core.multiindex import MultiIndex, multi_indices
from wfs.core.seminorm import SeminormSpec, coordinate_abs, weight_on_grid, weighted_seminorm_c
from wfs.errors import (BoxMismatch, HypothesisViolated, MissingStrategy, NonUniformGrid, OrderUnavailable,
                        SegmentLeavesDomain, StencilUnavailable)
from wfs.weights import Weight, WeightFamily


class BinomialTable:
    """binom(alpha, tau) = prod_i C(alpha_i, tau_i), cached up to ``max_order``."""

    def __init__(self, max_order: int = 8):
        self.max_order = max_order
        self._cache: dict = {}

    def __call__(self, alpha, tau) -> int:
        alpha, tau = MultiIndex.coerce(alpha), MultiIndex.coerce(tau)
        if alpha.order() > self.max_order:
            raise OrderUnavailable(f"|alpha| = {alpha.order()} > {self.max_order}")
        key = (alpha, tau)
        if key not in self._cache:
            self._cache[key] = math.prod(math.comb(a, t) for a, t in zip(alpha, tau)) if tau <= alpha else 0
        return self._cache[key]

    def pascal_holds(self, alpha, tau, axis: int) -> bool:
        """binom(alpha, tau) = binom(alpha - e_i, tau) + binom(alpha - e_i, tau - e_i)."""
        alpha, tau = MultiIndex.coerce(alpha), MultiIndex.coerce(tau)
        if alpha[axis] == 0:
            return True
        e = MultiIndex.unit(len(alpha), axis)
        lower = alpha - e
        second = self(lower, tau - e) if tau[axis] > 0 else 0
        return self(alpha, tau) == self(lower, tau) + second


BINOMIAL = BinomialTable()


def _factor_derivative(f, kappa: MultiIndex, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """(values of d^kappa f on the grid, validity mask) for a Weight or scalar GridFunction."""
    if isinstance(f, Weight):
        vals = f.partial_on_grid(kappa, grid) if kappa.order() else f.on_grid(grid)
        return np.asarray(vals, dtype=float), np.ones(grid.counts, dtype=bool)
    if isinstance(f, GridFunction):
        if f.d != 1:
            raise ValueError("the scalar factor must have d = 1")
        try:
            d = f.derivative(kappa)
        except StencilUnavailable as exc:
            raise OrderUnavailable(str(exc)) from exc
        return d.values[..., 0], d.mask
    raise TypeError("factor must be a Weight or a GridFunction")


def _gamma_derivative(gamma: GridFunction, tau: MultiIndex) -> GridFunction:
    try:
        return gamma.derivative(tau)
    except StencilUnavailable as exc:
        raise OrderUnavailable(str(exc)) from exc


def leibniz_1var(f, gamma: GridFunction, alpha) -> GridFunction:
    """sum_{tau <= alpha} binom(alpha, tau) d^(alpha-tau) f * d^tau gamma, nodewise.

    Derivatives of a Weight are exact; derivatives of GridFunctions are FD.
    """
    alpha = MultiIndex.coerce(alpha)
    total = np.zeros(gamma.values.shape)
    mask = gamma.mask.copy()
    for tau in alpha.below():
        fv, fm = _factor_derivative(f, alpha - tau, gamma.grid)
        dg = _gamma_derivative(gamma, tau)
        total = total + BINOMIAL(alpha, tau) * fv[..., None] * dg.values
        mask &= fm & dg.mask
    return GridFunction(gamma.grid, gamma.domain, total, mask, metadata={"alpha": list(alpha)})


def leibniz_2var(f, gamma: GridFunction, alpha, beta) -> GridFunction:
    """Two-block product rule: sum over tau <= alpha, kappa <= beta of
    binom(alpha,tau) binom(beta,kappa) d^(alpha-tau, beta-kappa) f * d^(tau, kappa) gamma."""
    alpha, beta = MultiIndex.coerce(alpha), MultiIndex.coerce(beta)
    if gamma.grid.split is None or gamma.grid.split != len(alpha):
        raise ValueError("leibniz_2var needs a product grid split after len(alpha) axes")
    total = np.zeros(gamma.values.shape)
    mask = gamma.mask.copy()
    for tau in alpha.below():
        for kappa in beta.below():
            fv, fm = _factor_derivative(f, (alpha - tau).concat(beta - kappa), gamma.grid)
            dg = _gamma_derivative(gamma, tau.concat(kappa))
            coeff = BINOMIAL(alpha, tau) * BINOMIAL(beta, kappa)
            total = total + coeff * fv[..., None] * dg.values
            mask &= fm & dg.mask
    return GridFunction(gamma.grid, gamma.domain, total, mask,
                        metadata={"alpha": list(alpha), "beta": list(beta)})


def product_of(f, gamma: GridFunction) -> GridFunction:
    """The pointwise product f * gamma (f a Weight or scalar GridFunction)."""
    fv, fm = _factor_derivative(f, MultiIndex.zero(gamma.dimension), gamma.grid)
    return GridFunction(gamma.grid, gamma.domain, fv[..., None] * gamma.values, gamma.mask & fm)


# -- Taylor bound ---------------------------------------------------------------


@dataclass
class TaylorReport:
    lhs: float
    rhs: float
    k: int
    distance: float
    passed: bool
    negative_control: bool = False

    def to_dict(self):
        return asdict(self)


def _interpolator(gf: GridFunction):
    return RegularGridInterpolator(tuple(gf.grid.axes()), gf.values, method="linear")


def _cells_valid(grid: Grid, mask: np.ndarray, points: np.ndarray) -> bool:
    """True iff every corner of the grid cell containing each point is masked."""
    idx = []
    for ax, ((lo, _), h, c) in enumerate(zip(grid.box, grid.spacing, grid.counts)):
        k = np.clip(np.floor((points[:, ax] - lo) / h + 1e-9).astype(int), 0, c - 2)
        frac = (points[:, ax] - lo) / h - k
        idx.append((k, np.where(frac > 1e-9, k + 1, k)))
    corners = np.array(np.meshgrid(*[[0, 1]] * grid.dimension, indexing="ij")).reshape(grid.dimension, -1).T
    for corner in corners:
        sel = tuple(idx[ax][c] for ax, c in enumerate(corner))
        if not mask[sel].all():
            return False
    return True


def taylor_bound_check(gamma: GridFunction, x, xbar, k: int, q: Optional[SeminormSpec] = None,
                       samples: int = 401, negative_control: bool = False) -> TaylorReport:
    """q(gamma(x)) <= (1/(k-1)!) ||x - xbar||_inf^k sum_{|alpha|=k} max_xi q(d^alpha gamma(xbar + xi (x - xbar))).

    ``gamma`` is sampled on the closure of U (its mask includes the boundary
    nodes, dense-interior semantics), so derivatives along the segment are
    one-sided finite differences from inside U. The maximum over xi in [0,1]
    is taken over ``samples`` points of the segment, interpolating linearly.
    """
    if k < 1:
        raise ValueError("order k must be >= 1")
    q = q or coordinate_abs(0)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    lo = np.array([b[0] for b in gamma.grid.box])
    hi = np.array([b[1] for b in gamma.grid.box])
    for p in (x, xbar):
        if np.any(p < lo - 1e-12) or np.any(p > hi + 1e-12):
            raise SegmentLeavesDomain(f"segment point {p} outside the working box")
    xi = np.linspace(0.0, 1.0, samples)[:, None]
    seg = np.clip(xbar + xi * (x - xbar), lo, hi)
    if not _cells_valid(gamma.grid, gamma.mask, seg):
        raise SegmentLeavesDomain("the segment leaves the sampled closure of U")
    lhs = float(q(_interpolator(gamma)(x[None, :]))[0])
    total = 0.0
    for alpha in multi_indices(gamma.dimension, k, exact=True):
        d = _gamma_derivative(gamma, alpha)
        if not _cells_valid(gamma.grid, d.mask, seg):
            raise SegmentLeavesDomain(f"no stencil for {alpha} along the segment")
        total += float(q(_interpolator(d)(seg)).max())
    dist = float(np.abs(x - xbar).max())
    rhs = dist ** k / math.factorial(k - 1) * total
    return TaylorReport(lhs, rhs, k, dist, lhs <= rhs, negative_control)


# -- extension by zero ---------------------------------------------------------------


def extend_by_zero(gamma: GridFunction, bigbox) -> GridFunction:
    """Copy masked values into an aligned grid over ``bigbox``; zero elsewhere; full mask."""
    spacing = gamma.grid.spacing
    bigbox = tuple((float(lo), float(hi)) for lo, hi in bigbox)
    if len(bigbox) != gamma.dimension:
        raise BoxMismatch("bigbox dimension differs")
    counts = []
    for (lo, hi), h in zip(bigbox, spacing):
        c = (hi - lo) / h
        if abs(c - round(c)) > 1e-8:
            raise BoxMismatch("bigbox is not a whole number of grid cells")
        counts.append(int(round(c)) + 1)
    big = Grid(bigbox, tuple(counts))
    off = gamma.grid.offset_in(big)
    sl = tuple(slice(o, o + c) for o, c in zip(off, gamma.grid.counts))
    vals = np.zeros(big.counts + (gamma.d,))
    vals[sl] = np.where(gamma.mask[..., None], gamma.values, 0.0)
    orig = np.zeros(big.counts, dtype=bool)
    orig[sl] = gamma.mask
    out = GridFunction(big, full_space(bigbox), vals, np.ones(big.counts, dtype=bool))
    out.metadata["original_mask"] = orig
    return out


@dataclass
class SmoothnessReport:
    jumps: dict
    thresholds: dict
    h: float
    passed: bool


def _seam(orig: np.ndarray, width: int) -> np.ndarray:
    """Nodes within ``width`` nodes (along some axis) of a change of ``orig``."""
    near = np.zeros(orig.shape, dtype=bool)
    for ax in range(orig.ndim):
        change = np.zeros(orig.shape, dtype=bool)
        a = [slice(None)] * orig.ndim
        b = [slice(None)] * orig.ndim
        a[ax], b[ax] = slice(1, None), slice(None, -1)
        diff = orig[tuple(a)] != orig[tuple(b)]
        change[tuple(a)] |= diff
        change[tuple(b)] |= diff
        grown = change.copy()
        for s in range(1, width + 1):
            grown |= np.roll(change, s, axis=ax) | np.roll(change, -s, axis=ax)
        near |= grown
    return near


def extension_smoothness_check(eta: GridFunction, k: int, width: int = 3, factor: float = 10.0) -> SmoothnessReport:
    """For |alpha| <= k, the largest jump |FD^alpha eta(i+1) - FD^alpha eta(i)| between
    neighbouring seam nodes against C h, where C = ``factor`` times the largest such
    discrete slope |jump|/h away from the seam."""
    orig = eta.metadata.get("original_mask")
    if orig is None:
        orig = eta.mask
    seam = _seam(orig, width)
    h = max(eta.grid.spacing)
    jumps, thresh, ok = {}, {}, True
    for alpha in multi_indices(eta.dimension, k):
        d = eta.derivative(alpha)
        v = d.values
        seam_jump, interior_slope = 0.0, 0.0
        for ax in range(eta.dimension):
            a = [slice(None)] * eta.dimension
            b = [slice(None)] * eta.dimension
            a[ax], b[ax] = slice(1, None), slice(None, -1)
            a, b = tuple(a), tuple(b)
            step = np.abs(v[a] - v[b]).max(axis=-1)
            both = d.mask[a] & d.mask[b]
            in_seam = both & (seam[a] | seam[b])
            inner = both & ~(seam[a] | seam[b]) & orig[a] & orig[b]
            if in_seam.any():
                seam_jump = max(seam_jump, float(step[in_seam].max()))
            if inner.any():
                interior_slope = max(interior_slope, float(step[inner].max()) / eta.grid.spacing[ax])
        limit = factor * interior_slope * h
        key = " ".join(map(str, alpha))
        jumps[key], thresh[key] = seam_jump, limit
        ok &= seam_jump <= limit + 1e-13
    return SmoothnessReport(jumps, thresh, h, bool(ok))


# -- weak integral -------------------------------------------------------------------


def _simpson_weights(count: int) -> np.ndarray:
    """Composite Simpson weights (in units of h) on ``count`` nodes; a 3/8 panel
    closes an odd number of intervals, so cubics stay exact."""
    n = count - 1
    if n < 1:
        return np.zeros(count)
    if n == 1:
        return np.array([0.5, 0.5])
    w = np.zeros(count)
    simpson = n if n % 2 == 0 else n - 3
    for i in range(0, simpson, 2):
        w[i:i + 3] += np.array([1.0, 4.0, 1.0]) / 3.0
    if n % 2:
        w[simpson:simpson + 4] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    return w


def weak_integral(times, values, a: Optional[float] = None, b: Optional[float] = None) -> np.ndarray:
    """Componentwise composite Simpson integral of a time-sampled curve from a to b."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if len(t) != len(v):
        raise ValueError("times and values differ in length")
    steps = np.diff(t)
    if len(t) < 2 or np.any(np.abs(steps - steps[0]) > 1e-9 * abs(steps[0])):
        raise NonUniformGrid("weak_integral needs a uniform time grid")
    h = steps[0]
    a = t[0] if a is None else a
    b = t[-1] if b is None else b
    ia, ib = (int(round((s - t[0]) / h)) for s in (a, b))
    if not (0 <= ia < len(t) and 0 <= ib < len(t)) or abs(t[ia] - a) > 1e-9 * abs(h) or abs(t[ib] - b) > 1e-9 * abs(h):
        raise NonUniformGrid("integration limits must be time-grid nodes")
    sign = 1.0
    if ib < ia:
        ia, ib, sign = ib, ia, -1.0
    w = _simpson_weights(ib - ia + 1)
    return sign * h * (w @ v[ia:ib + 1])


# -- derivative closure -----------------------------------------------------------------


@dataclass
class ClosureReport:
    residual: float
    bound: float
    terms: list
    sequence_decreasing: bool
    passed: bool


def derivative_closure_check(sequence: Sequence[GridFunction], gamma: GridFunction, g: Sequence[GridFunction],
                             f=None, q: Optional[SeminormSpec] = None, tol: float = 1e-6) -> ClosureReport:
    """At the last m, ||FD^{e_i} gamma - g_i|| <= ||FD^{e_i}(gamma - gamma_m)|| + ||FD^{e_i} gamma_m - g_i||.

    ``residual`` is the left side (summed over axes); PASS iff the triangle
    inequality holds and the residual is at most ``tol``.
    """
    q = q or coordinate_abs(0)
    n = gamma.dimension
    last = sequence[-1]
    terms, residual, bound, ok = [], 0.0, 0.0, True

    def norm(gf):
        return weighted_seminorm_c(gf, f, q)

    for i in range(n):
        e = MultiIndex.unit(n, i)
        lhs = norm(gamma.derivative(e) - g[i])
        t1 = norm((gamma - last).derivative(e))
        t2 = norm(last.derivative(e) - g[i])
        terms.append({"axis": i, "lhs": lhs, "t1": t1, "t2": t2})
        ok &= lhs <= t1 + t2 + 1e-12 * max(1.0, t1 + t2)
        residual += lhs
        bound += t1 + t2
    dist = [norm(gamma - gm) for gm in sequence]
    dec = all(b2 <= b1 + 1e-12 for b1, b2 in zip(dist, dist[1:]))
    return ClosureReport(residual, bound, terms, dec, bool(ok and residual <= tol))


# -- decay along shells ---------------------------------------------------------------


@dataclass
class DecayReport:
    rows: list = field(default_factory=list)
    passed: bool = True


def decay_check(gamma: GridFunction, F: WeightFamily, alpha_max: int, q: Optional[SeminormSpec] = None,
                shells: int = 12, start: float = 0.0) -> DecayReport:
    """Shell maxima of f q(FD^alpha gamma) over sup-norm shells beyond ``start``.

    Each shell maximum must stay below sup_shell(f/g) ||gamma||_{g,alpha,q}
    (g the o-strategy image of f), and the maxima must be nonincreasing.
    """
    q = q or coordinate_abs(0)
    pts = gamma.grid.mesh()
    norms = np.abs(pts).max(axis=-1)
    edges = np.linspace(start, norms.max(), shells + 1)
    report = DecayReport()
    for idx, f in enumerate(F.members):
        try:
            g = F.strategy(f)
        except MissingStrategy as exc:
            raise HypothesisViolated(str(exc)) from exc
        fv = weight_on_grid(f, gamma.grid)
        gv = g.on_grid(gamma.grid)
        for alpha in multi_indices(gamma.dimension, alpha_max):
            d = gamma.derivative(alpha)
            field_ = fv * q(d.values)
            norm_g = weighted_seminorm_c(d, g, q)
            maxima, bounds = [], []
            for lo, hi in zip(edges[:-1], edges[1:]):
                sel = d.mask & (norms >= lo) & ((norms < hi) | (hi == edges[-1]))
                if not sel.any():
                    continue
                maxima.append(float(field_[sel].max()))
                bounds.append(float((fv[sel] / gv[sel]).max()) * norm_g)
            below = all(m <= b * (1 + 1e-12) + 1e-300 for m, b in zip(maxima, bounds))
            dec = all(m2 <= m1 * (1 + 1e-12) for m1, m2 in zip(maxima, maxima[1:]))
            report.rows.append({"f_index": idx, "alpha": list(alpha), "maxima": maxima, "bounds": bounds,
                                "below_bound": below, "decreasing": dec})
            report.passed &= below and dec
    return report
