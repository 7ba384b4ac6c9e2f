"""Currying, uncurrying and flipping of grid functions on product domains.

At grid level the exponential law is a reindexing: the multiset of products
f1(x) f2(y) q(d^(alpha,beta) gamma(x, y)) is the same whether the supremum is
taken over the product grid at once or iterated (inner over y, outer over x).
The infinite-dimensional statements (surjectivity via completion, the
homeomorphism itself) are not representable; reports say so.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from wfs.core.domain import DomainSpec, full_space, product_domain
from wfs.core.grid import Grid, GridFunction
from wfs.core.multiindex import MultiIndex
from wfs.core.seminorm import (SeminormSpec, curried_derivative, iterated_seminorm,
                               iterated_weighted_max, iterated_weighted_max_batch, product_weighted_max,
                               product_weighted_max_batch, weight_on_grid,
                               weighted_seminorm_ck, weighted_seminorm_ckl)
from wfs.errors import NotProductGrid

SCOPE_NOTE = ("finite-grid seminorm identity and round-trip bijectivity only; "
              "surjectivity of the infinite-dimensional map is not verified")


def _factor_domains(gamma: GridFunction) -> tuple[DomainSpec, DomainSpec]:
    gu, gv = gamma.grid.blocks()
    if gamma.domain.factors is not None:
        return gamma.domain.factors
    if gamma.domain.is_full_space:
        return full_space(gu.box), full_space(gv.box)
    raise NotProductGrid("domain is not a product of two factor domains")


@dataclass(eq=False)
class CurriedGridFunction:
    """x -> (y -> gamma(x, y)): outer grid over U of inner grid functions on V.

    ``values`` has shape (*outer.counts, *inner.counts, d) and is shared with
    the uncurried function whenever possible.
    """

    outer_grid: Grid
    inner_grid: Grid
    values: np.ndarray
    outer_mask: np.ndarray
    inner_mask: np.ndarray
    outer_domain: DomainSpec
    inner_domain: DomainSpec
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n, m = self.outer_grid.dimension, self.inner_grid.dimension
        if self.values.shape[: n + m] != self.outer_grid.counts + self.inner_grid.counts:
            raise NotProductGrid("value tensor does not match outer x inner grid")

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    def at(self, index) -> GridFunction:
        """The inner grid function gamma^vee(x) at outer node ``index``."""
        index = tuple(np.atleast_1d(index))
        return GridFunction(self.inner_grid, self.inner_domain, self.values[index], self.inner_mask)


def curry(gamma: GridFunction) -> CurriedGridFunction:
    if gamma.grid.split is None:
        raise NotProductGrid("curry needs a product grid")
    gu, gv = gamma.grid.blocks()
    du, dv = _factor_domains(gamma)
    n = gu.dimension
    inner_axes = tuple(range(n, gamma.dimension))
    outer_mask = gamma.mask.any(axis=inner_axes)
    inner_mask = gamma.mask.any(axis=tuple(range(n)))
    if not np.array_equal(np.multiply.outer(outer_mask, inner_mask), gamma.mask):
        raise NotProductGrid("mask does not factor as outer x inner")
    return CurriedGridFunction(gu, gv, gamma.values, outer_mask, inner_mask, du, dv)


def uncurry(curried: CurriedGridFunction) -> GridFunction:
    grid = Grid.product(curried.outer_grid, curried.inner_grid)
    domain = product_domain(curried.outer_domain, curried.inner_domain)
    mask = np.multiply.outer(curried.outer_mask, curried.inner_mask)
    return GridFunction(grid, domain, curried.values, mask)


def flip(gamma: GridFunction) -> GridFunction:
    """gamma on U x V -> (y, x) -> gamma(x, y) on V x U (pure transposition)."""
    if gamma.grid.split is None:
        raise NotProductGrid("flip needs a product grid")
    gu, gv = gamma.grid.blocks()
    du, dv = _factor_domains(gamma)
    n, m = gu.dimension, gv.dimension
    perm = tuple(range(n, n + m)) + tuple(range(n)) + (n + m,)
    grid = Grid.product(gv, gu)
    return GridFunction(grid, product_domain(dv, du), np.transpose(gamma.values, perm),
                        np.transpose(gamma.mask, perm[:-1]))


@dataclass
class IdentityReport:
    lhs: float
    rhs: float
    rel_diff: float
    grid: dict
    weights: list
    alpha: list
    beta: list
    q: str
    note: str = SCOPE_NOTE

    def passed(self, tol: float = 1e-12) -> bool:
        return self.rel_diff <= tol

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def relative_difference(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def seminorm_identity_check(gamma: GridFunction, f1, f2, alpha, beta, q: SeminormSpec,
                            curried: Optional[CurriedGridFunction] = None) -> IdentityReport:
    """Compare the product-grid seminorm with the iterated (curried) one."""
    alpha, beta = MultiIndex.coerce(alpha), MultiIndex.coerce(beta)
    lhs = weighted_seminorm_ckl(gamma, f1, f2, alpha, beta, q)
    rhs = iterated_seminorm(curried or curry(gamma), f1, alpha, f2, beta, q)
    return IdentityReport(lhs, rhs, relative_difference(lhs, rhs), gamma.grid.to_dict(),
                          [getattr(f1, "label", "1"), getattr(f2, "label", "1")],
                          list(alpha), list(beta), q.label())


@dataclass
class FlipReport:
    original: float
    flipped: float
    rel_diff: float

    def passed(self, tol: float = 1e-12) -> bool:
        return self.rel_diff <= tol


def flip_check(gamma: GridFunction, f1, f2, alpha, beta, q: SeminormSpec,
               flipped: Optional[GridFunction] = None) -> FlipReport:
    """||flip(gamma)||_{f2 x f1,(beta,alpha),q} against ||gamma||_{f1 x f2,(alpha,beta),q}."""
    original = weighted_seminorm_ckl(gamma, f1, f2, alpha, beta, q)
    fl = weighted_seminorm_ckl(flipped or flip(gamma), f2, f1, beta, alpha, q)
    return FlipReport(original, fl, relative_difference(original, fl))


@dataclass
class SuiteRow:
    weights: tuple
    alpha: tuple
    beta: tuple
    q: str
    identity: IdentityReport
    flip: FlipReport


def identity_suite(gamma: GridFunction, weight_pairs: Sequence, alphas: Sequence, betas: Sequence,
                   seminorms: Sequence[SeminormSpec]) -> list[SuiteRow]:
    """Identity and flip checks for every (weights, alpha, beta, q) combination.

    Same numbers as looping over seminorm_identity_check and flip_check, but
    each derivative and each q(derivative) array is computed once and shared
    across all weight pairs.
    """
    curried = curry(gamma)
    flipped = flip(gamma)
    gu, gv = gamma.grid.blocks()
    wv = [(weight_on_grid(f1, gu), weight_on_grid(f2, gv)) for f1, f2 in weight_pairs]
    W1 = np.array([w1 for w1, _ in wv])
    W2 = np.array([w2 for _, w2 in wv])
    W12 = np.array([np.multiply.outer(w1, w2) for w1, w2 in wv])
    W21 = np.array([np.multiply.outer(w2, w1) for w1, w2 in wv])
    labels = [(getattr(f1, "label", "1"), getattr(f2, "label", "1")) for f1, f2 in weight_pairs]
    grid_info = gamma.grid.to_dict()
    rows = []
    for a in alphas:
        a = MultiIndex.coerce(a)
        for b in betas:
            b = MultiIndex.coerce(b)
            d = gamma.derivative(a.concat(b))
            cvals, cvalid = curried_derivative(curried, a, b)
            fd = flipped.derivative(b.concat(a))
            for q in seminorms:
                qd, qc, qf = q(d.values), q(cvals), q(fd.values)
                lhs_all = product_weighted_max_batch(qd, d.mask, W12)
                rhs_all = iterated_weighted_max_batch(qc, cvalid, W1, W2)
                fl_all = product_weighted_max_batch(qf, fd.mask, W21)
                for lab, lhs, rhs, fl in zip(labels, lhs_all.tolist(), rhs_all.tolist(), fl_all.tolist()):
                    ident = IdentityReport(lhs, rhs, relative_difference(lhs, rhs), grid_info,
                                           list(lab), list(a), list(b), q.label())
                    rows.append(SuiteRow(lab, tuple(a), tuple(b), q.label(), ident,
                                         FlipReport(lhs, fl, relative_difference(lhs, fl))))
    return rows


@dataclass
class EquivalenceRow:
    weight: str
    alpha: list
    weighted: float
    constant: float
    compact: float
    ok: bool


def ck_space_equivalence_demo(gamma: GridFunction, K, bumps: Sequence, alphas: Sequence,
                              q: SeminormSpec) -> list[EquivalenceRow]:
    """Check ||gamma||_{f,alpha,q} <= (max_K f) ||gamma||_{K,alpha,q} for bumps supported in K.

    ||gamma||_{K,alpha,q} is the unweighted grid maximum over nodes in the box K.
    """
    pts = gamma.grid.mesh()
    lo = np.array([k[0] for k in K])
    hi = np.array([k[1] for k in K])
    in_k = np.all((pts >= lo) & (pts <= hi), axis=-1)
    rows = []
    for f in bumps:
        fv = weight_on_grid(f, gamma.grid)
        if np.any(fv[~in_k] > 0):
            raise ValueError(f"{f.label} is not supported in K")
        r = float(fv[in_k].max())
        for a in alphas:
            d = gamma.derivative(a)
            sel = in_k & d.mask
            compact = float(q(d.values)[sel].max())
            weighted = weighted_seminorm_ck(gamma, f, a, q)
            rows.append(EquivalenceRow(f.label, list(MultiIndex.coerce(a)), weighted, r, compact,
                                       weighted <= r * compact))
    return rows
