"""Weighted seminorms ||gamma||_{f,alpha,q} evaluated as grid maxima.

A grid maximum is a lower bound of the true supremum over the domain; sup
over a noncompact domain is approximated on a truncated box chosen so that
the weighted tail is negligible.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from wfs.core.fd import diff_axis
from wfs.core.grid import Grid, GridFunction
from wfs.core.multiindex import MultiIndex
from wfs.errors import DimensionMismatch, EmptyMask, NotProductGrid


@dataclass(frozen=True)
class SeminormSpec:
    """Continuous seminorm q on the value space R^d."""

    kind: str
    index: Optional[int] = None
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("coordinate-abs", "sup-norm", "p-norm"):
            raise ValueError(f"unknown seminorm kind {self.kind!r}")
        if self.kind == "coordinate-abs" and self.index is None:
            raise ValueError("coordinate-abs needs an index")
        if self.kind == "p-norm" and (self.p is None or self.p < 1):
            raise ValueError("p-norm needs p >= 1")

    def __call__(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.kind == "coordinate-abs":
            return np.abs(v[..., self.index])
        if self.kind == "sup-norm":
            return np.abs(v).max(axis=-1)
        a = np.abs(v)
        if self.p == 1:
            return a.sum(axis=-1)
        if self.p == 2:
            with np.errstate(over="ignore", under="ignore"):
                out = np.asarray(np.sqrt(np.einsum("...i,...i->...", a, a)))
            # redo entries whose squares left the normal range, scaled by their largest component
            risky = ~(out > 1e-150) | ~(out < 1e150)
            if risky.any():
                out = np.where(risky, self._scaled(a), out)
            return out
        return self._scaled(a)

    def _scaled(self, a: np.ndarray) -> np.ndarray:
        """p-norm of nonnegative rows, scaled by the largest entry so |v|^p neither underflows nor overflows."""
        top = a.max(axis=-1, keepdims=True)
        safe = np.where(top > 0, top, 1.0)
        r = a / safe
        inner = np.sqrt(np.sum(r * r, axis=-1)) if self.p == 2 else np.sum(r ** self.p, axis=-1) ** (1.0 / self.p)
        return top[..., 0] * inner

    def label(self) -> str:
        if self.kind == "coordinate-abs":
            return f"abs[{self.index}]"
        if self.kind == "p-norm":
            return f"p{self.p:g}"
        return "sup"


def coordinate_abs(i: int = 0) -> SeminormSpec:
    return SeminormSpec("coordinate-abs", index=i)


def sup_norm() -> SeminormSpec:
    return SeminormSpec("sup-norm")


def p_norm(p: float = 2.0) -> SeminormSpec:
    return SeminormSpec("p-norm", p=p)


def weight_on_grid(f, grid: Grid) -> np.ndarray:
    """Weight values at every node; ``f`` is a Weight, an array or None (== 1)."""
    if f is None:
        return np.ones(grid.counts)
    if isinstance(f, np.ndarray):
        return f
    if f.dimension != grid.dimension:
        raise DimensionMismatch(f"weight of dimension {f.dimension} on a {grid.dimension}-D grid")
    return np.asarray(f.on_grid(grid), dtype=float)


def _masked_max(field: np.ndarray, mask: np.ndarray) -> float:
    if mask.all():
        return float(field.max())
    if not mask.any():
        raise EmptyMask("no masked node to take a maximum over")
    return float(np.max(field, where=mask, initial=-np.inf))


def weighted_seminorm_c(gamma: GridFunction, f, q: SeminormSpec) -> float:
    """max over masked nodes of f(x) q(gamma(x))."""
    w = weight_on_grid(f, gamma.grid)
    return _masked_max(w * q(gamma.values), gamma.mask)


def weighted_seminorm_ck(gamma: GridFunction, f, alpha, q: SeminormSpec) -> float:
    """max over nodes of f(x) q(FD^alpha gamma(x))."""
    alpha = MultiIndex.coerce(alpha)
    return weighted_seminorm_c(gamma.derivative(alpha), f, q)


def product_weighted_max(qvals: np.ndarray, mask: np.ndarray, w1: np.ndarray, w2: np.ndarray,
                         w12: Optional[np.ndarray] = None) -> float:
    """max over masked product nodes of (w1(x) w2(y)) * qvals(x, y).

    ``w12`` may carry the precomputed outer product of w1 and w2.
    """
    if w12 is None:
        w12 = np.multiply.outer(w1, w2)
    return _masked_max(w12 * qvals, mask)


def iterated_weighted_max(qvals: np.ndarray, valid: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> float:
    """max over outer x of w1(x) * (max over inner y of w2(y) * qvals(x, y))."""
    n = w1.ndim
    inner_axes = tuple(range(n, valid.ndim))
    prod = w2.reshape((1,) * n + w2.shape) * qvals
    if valid.all():
        return float((w1 * prod.max(axis=inner_axes)).max())
    inner_norm = np.max(prod, axis=inner_axes, where=valid, initial=-np.inf)
    outer_valid = valid.any(axis=inner_axes)
    return _masked_max(w1 * np.where(outer_valid, inner_norm, 0.0), outer_valid)


def product_weighted_max_batch(qvals: np.ndarray, mask: np.ndarray, w12: np.ndarray) -> np.ndarray:
    """product_weighted_max for a stack of precomputed outer weights ``w12`` (P, *grid)."""
    field = (w12 * qvals).reshape(len(w12), -1)
    if mask.all():
        return field.max(axis=1)
    if not mask.any():
        raise EmptyMask("no masked node to take a maximum over")
    return np.max(field, axis=1, where=mask.reshape(1, -1), initial=-np.inf)


def iterated_weighted_max_batch(qvals: np.ndarray, valid: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """iterated_weighted_max for stacks ``w1`` (P, *outer) and ``w2`` (P, *inner)."""
    n = w1.ndim - 1
    inner_axes = tuple(range(n + 1, valid.ndim + 1))
    prod = w2.reshape((len(w2),) + (1,) * n + w2.shape[1:]) * qvals
    if valid.all():
        return (w1 * prod.max(axis=inner_axes)).reshape(len(w1), -1).max(axis=1)
    inner_norm = np.max(prod, axis=inner_axes, where=valid, initial=-np.inf)
    outer_valid = valid.any(axis=tuple(range(n, valid.ndim)))
    if not outer_valid.any():
        raise EmptyMask("no masked node to take a maximum over")
    field = (w1 * np.where(outer_valid, inner_norm, 0.0)).reshape(len(w1), -1)
    return np.max(field, axis=1, where=outer_valid.reshape(1, -1), initial=-np.inf)


def weighted_seminorm_ckl(gamma: GridFunction, f1, f2, alpha, beta, q: SeminormSpec) -> float:
    """max over product nodes of f1(x) f2(y) q(FD^(alpha,beta) gamma(x, y))."""
    grid = gamma.grid
    if grid.split is None:
        raise NotProductGrid("weighted_seminorm_ckl needs a product grid")
    alpha, beta = MultiIndex.coerce(alpha), MultiIndex.coerce(beta)
    gu, gv = grid.blocks()
    if len(alpha) != gu.dimension or len(beta) != gv.dimension:
        raise DimensionMismatch("multi-index lengths do not match the product blocks")
    d = gamma.derivative(alpha.concat(beta))
    return product_weighted_max(q(d.values), d.mask, weight_on_grid(f1, gu), weight_on_grid(f2, gv))


def curried_derivative(curried, alpha, beta) -> tuple[np.ndarray, np.ndarray]:
    """Outer FD^alpha on inner grid functions (componentwise), then inner FD^beta.

    Returns (values of shape (*outer, *inner, d), validity mask).
    """
    alpha, beta = MultiIndex.coerce(alpha), MultiIndex.coerce(beta)
    cache = curried.cache
    key = (alpha, beta)
    if key in cache:
        return cache[key]
    n = curried.outer_grid.dimension
    m = curried.inner_grid.dimension
    if len(alpha) != n or len(beta) != m:
        raise DimensionMismatch("multi-index lengths do not match the curried blocks")
    values = curried.values
    outer = np.broadcast_to(curried.outer_mask.reshape(curried.outer_mask.shape + (1,) * m),
                            values.shape[:-1])
    for axis, (order, h) in enumerate(zip(alpha, curried.outer_grid.spacing)):
        values, outer, _ = diff_axis(values, outer, axis, order, h)
    inner = outer & curried.inner_mask.reshape((1,) * n + curried.inner_mask.shape)
    for j, (order, h) in enumerate(zip(beta, curried.inner_grid.spacing)):
        values, inner, _ = diff_axis(values, inner, n + j, order, h)
    cache[key] = (values, inner)
    return values, inner


def iterated_seminorm(curried, f1, alpha, f2, beta, q: SeminormSpec) -> float:
    """sup over outer nodes x of f1(x) * ||FD^alpha_outer gamma(x)||_{f2, beta, q}.

    The inner seminorm is the grid maximum over the inner grid, taken for all
    outer nodes at once.
    """
    values, valid = curried_derivative(curried, alpha, beta)
    return iterated_weighted_max(q(values), valid, weight_on_grid(f1, curried.outer_grid),
                                 weight_on_grid(f2, curried.inner_grid))
