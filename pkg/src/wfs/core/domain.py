"""Domains U, V in R^n described by a signed boundary distance.

The distance is positive inside, negative outside and (for open domains)
a node lying exactly on the boundary is not a member.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Box = tuple[tuple[float, float], ...]

KINDS = ("full-space-truncated", "box", "ball", "distance-region", "product")


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    box: Box
    distance: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    closed: bool = False
    factors: Optional[tuple["DomainSpec", "DomainSpec"]] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @property
    def dimension(self) -> int:
        return len(self.box)

    @property
    def is_full_space(self) -> bool:
        if self.factors is not None:
            return all(f.is_full_space for f in self.factors)
        return self.kind == "full-space-truncated"

    def boundary_distance(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.asarray(self.distance(pts), dtype=float) * np.ones(pts.shape[:-1])

    def contains(self, points) -> np.ndarray:
        if self.factors is not None:
            n = self.factors[0].dimension
            pts = np.asarray(points, dtype=float)
            return self.factors[0].contains(pts[..., :n]) & self.factors[1].contains(pts[..., n:])
        d = self.boundary_distance(points)
        return d >= 0 if self.closed else d > 0

    def shrink(self, eps: float) -> "Region":
        """The set U_eps = {x in U : d(x, boundary) >= eps}."""
        return Region(self.dimension, lambda p: self.contains(p) & (self.boundary_distance(p) >= eps),
                      label=f"{self.label or self.kind}_{eps:g}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "box": [list(iv) for iv in self.box], "closed": self.closed,
               "label": self.label}
        if self.factors is not None:
            out["factors"] = [f.to_dict() for f in self.factors]
        return out


@dataclass(frozen=True)
class Region:
    """A plain membership predicate, used for indicator sets of convolutions."""

    dimension: int
    predicate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    label: str = ""

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.asarray(self.predicate(pts), dtype=bool) & np.ones(pts.shape[:-1], dtype=bool)


def _as_box(box) -> Box:
    return tuple((float(lo), float(hi)) for lo, hi in box)


def full_space(box) -> DomainSpec:
    """R^n, sampled on the truncation ``box``."""
    box = _as_box(box)
    return DomainSpec("full-space-truncated", box, lambda p: np.full(p.shape[:-1], np.inf),
                      label="R^%d" % len(box))


def box_domain(box, closed: bool = False) -> DomainSpec:
    box = _as_box(box)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])

    def dist(p):
        return np.minimum(p - lo, hi - p).min(axis=-1)

    return DomainSpec("box", box, dist, closed=closed, label="box")


def unit_interval(closed: bool = True) -> DomainSpec:
    """K = [0, 1] with dense-interior semantics: boundary nodes are members."""
    return box_domain([(0.0, 1.0)], closed=closed)


def ball(center, radius: float, box=None) -> DomainSpec:
    center = np.asarray(center, dtype=float)
    if box is None:
        box = [(c - radius, c + radius) for c in center]

    def dist(p):
        return radius - np.linalg.norm(p - center, axis=-1)

    return DomainSpec("ball", _as_box(box), dist, label=f"B_{radius:g}")


def half_space(box, axis: int = 0, offset: float = 0.0) -> DomainSpec:
    """{x : x[axis] > offset}; U = (0, inf) in one dimension."""

    def dist(p):
        return p[..., axis] - offset

    return DomainSpec("distance-region", _as_box(box), dist, label=f"x{axis}>{offset:g}")


def product_domain(first: DomainSpec, second: DomainSpec) -> DomainSpec:
    n = first.dimension

    def dist(p):
        return np.minimum(first.boundary_distance(p[..., :n]), second.boundary_distance(p[..., n:]))

    closed = first.closed and second.closed
    dom = DomainSpec("product", first.box + second.box, dist, closed=closed,
                     factors=(first, second), label=f"{first.label}x{second.label}")
    return dom


def closed_inf_ball(radius: float, n: int) -> Region:
    """Closed sup-norm ball {||x||_inf <= radius}."""
    return Region(n, lambda p: np.abs(p).max(axis=-1) <= radius, label=f"Bbar_inf_{radius:g}")


def everything(n: int) -> Region:
    return Region(n, lambda p: np.ones(p.shape[:-1], dtype=bool), label="R^n")


def empty_set(n: int) -> Region:
    return Region(n, lambda p: np.zeros(p.shape[:-1], dtype=bool), label="empty")


def closed_ball(center, radius: float) -> Region:
    center = np.asarray(center, dtype=float)
    return Region(len(center), lambda p: np.linalg.norm(p - center, axis=-1) <= radius,
                  label=f"Bbar_{radius:g}")
