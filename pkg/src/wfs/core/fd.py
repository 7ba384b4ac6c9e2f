"""Second-order finite differences of masked grid functions.

Each node uses the central stencil when its whole stencil is masked and a
second-order one-sided (shifted) stencil otherwise; nodes where no stencil
fits inside the masked run are dropped from the output mask.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

from wfs.core.grid import GridFunction
from wfs.core.multiindex import MultiIndex
from wfs.errors import DimensionMismatch, StencilUnavailable


@lru_cache(maxsize=None)
def stencil_weights(offsets: tuple[int, ...], order: int) -> tuple[float, ...]:
    """Weights w with sum_k w_k u(x + o_k h) = h^order u^(order)(x) + O(h^(len - order)).

    Solved exactly in rational arithmetic, so symmetric stencils come out symmetric.
    """
    w = len(offsets)
    if order >= w:
        raise StencilUnavailable(f"{w} points cannot resolve derivative order {order}")
    # rows j: sum_k w_k o_k^j / j! = delta(j, order)
    a = [[Fraction(o) ** j for o in offsets] for j in range(w)]
    fact = 1
    for j in range(1, order + 1):
        fact *= j
    b = [Fraction(fact) if j == order else Fraction(0) for j in range(w)]
    for col in range(w):
        piv = next(r for r in range(col, w) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(w):
            if r != col and a[r][col] != 0:
                f = a[r][col] / a[col][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
                b[r] -= f * b[col]
    return tuple(float(b[k] / a[k][k]) for k in range(w))


def _run_lengths(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Consecutive masked neighbours to the left/right along axis 0."""
    n = mask.shape[0]
    idx = np.arange(n).reshape((n,) + (1,) * (mask.ndim - 1))
    if mask.all():
        return np.broadcast_to(idx, mask.shape), np.broadcast_to(n - 1 - idx, mask.shape)
    last_gap = np.maximum.accumulate(np.where(mask, -1, idx), axis=0)
    next_gap = np.flip(np.minimum.accumulate(np.flip(np.where(mask, n, idx), axis=0), axis=0), axis=0)
    left = np.where(mask, idx - last_gap - 1, 0)
    right = np.where(mask, next_gap - idx - 1, 0)
    return left, right


def diff_axis(values: np.ndarray, mask: np.ndarray, axis: int, order: int, h: float):
    """Differentiate ``values`` (shape (*counts, d)) ``order`` times along ``axis``.

    Returns (derivative values, output mask, stencil usage counts).
    """
    if order == 0:
        return values, mask, {"central": int(mask.sum()), "one_sided": 0, "none": 0}
    n = values.shape[axis]
    if n < 2 * order + 1:
        raise StencilUnavailable(f"axis {axis} has {n} nodes, derivative order {order} needs {2 * order + 1}")
    v = np.moveaxis(values, axis, 0)
    m = np.moveaxis(mask, axis, 0)
    left, right = _run_lengths(m)

    p = (order + 1) // 2
    central = m & (left >= p) & (right >= p)
    w = order + 2
    span = left + right + 1
    one_sided = m & ~central & (span >= w)
    shift = np.clip(-((w - 1) // 2), -left, right - (w - 1))

    groups = [(tuple(range(-p, p + 1)), central)]
    for s in np.unique(shift[one_sided]):
        groups.append((tuple(range(int(s), int(s) + w)), one_sided & (shift == s)))

    out = np.zeros(v.shape)
    other_axes = tuple(range(1, m.ndim))
    tail = (1,) * (v.ndim - m.ndim)
    for offsets, sel in groups:
        # restrict the stencil sum to the rows (along the axis) the group touches;
        # every selected node has its stencil inside [0, n), so no padding is needed
        rows = np.flatnonzero(sel.any(axis=other_axes)) if other_axes else np.flatnonzero(sel)
        if rows.size == 0:
            continue
        lo, hi = int(rows[0]), int(rows[-1]) + 1
        acc = None
        for o, wk in zip(offsets, stencil_weights(offsets, order)):
            if wk != 0.0:
                term = wk * v[lo + o: hi + o]
                acc = term if acc is None else acc + term
        block = sel[lo:hi]
        if block.all():
            out[lo:hi] = acc
        else:
            out[lo:hi] = np.where(block.reshape(block.shape + tail), acc, out[lo:hi])
    out = out / h ** order
    valid = central | one_sided
    usage = {"central": int(central.sum()), "one_sided": int(one_sided.sum()),
             "none": int((m & ~valid).sum())}
    return np.moveaxis(out, 0, axis), np.moveaxis(valid, 0, axis), usage


def finite_difference(gamma: GridFunction, alpha) -> GridFunction:
    """FD approximation of the partial derivative of ``gamma`` of multi-index ``alpha``.

    Axes are differentiated in increasing order, each with a direct stencil of
    order alpha_i; stencil usage per axis is kept in ``metadata["stencils"]``.
    """
    alpha = MultiIndex.coerce(alpha)
    if len(alpha) != gamma.dimension:
        raise DimensionMismatch(f"multi-index {alpha} has length {len(alpha)}, grid dimension {gamma.dimension}")
    nonzero = [i for i, a in enumerate(alpha) if a]
    if not nonzero:
        values, mask, usage = gamma.values, gamma.mask, []
    else:
        # reuse the cached derivative over the earlier axes; axis order is unchanged
        last = nonzero[-1]
        head = gamma.derivative(MultiIndex(alpha.entries[:last] + (0,) * (len(alpha) - last)))
        values, mask, u = diff_axis(head.values, head.mask, last, alpha[last], gamma.grid.spacing[last])
        usage = list(head.metadata.get("stencils", [])) + [{"axis": last, "order": alpha[last], **u}]
    if alpha.order() > 0 and gamma.mask.any() and not mask.any():
        raise StencilUnavailable(f"no node supports a stencil for {alpha}")
    return GridFunction(gamma.grid, gamma.domain, values, mask,
                        metadata={"alpha": list(alpha), "stencils": usage})
