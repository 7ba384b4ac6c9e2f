from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from wfs.core.domain import DomainSpec, full_space
from wfs.core.multiindex import MultiIndex
from wfs.errors import BoxMismatch, DimensionMismatch, NotProductGrid

MIN_COUNT = 5
_MAGIC = b"WFSG"


@dataclass(frozen=True)
class Grid:
    """Tensor grid over a box; ``split`` marks a product grid U x V (dim U = split)."""

    box: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]
    split: Optional[int] = None

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        counts = tuple(int(c) for c in self.counts)
        if len(box) != len(counts):
            raise DimensionMismatch("box and counts differ in length")
        if any(c < MIN_COUNT for c in counts):
            raise ValueError(f"every axis needs at least {MIN_COUNT} nodes, got {counts}")
        if any(hi <= lo for lo, hi in box):
            raise ValueError(f"degenerate box {box}")
        if self.split is not None and not 0 < self.split < len(box):
            raise ValueError(f"split {self.split} invalid for dimension {len(box)}")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(cls, box, spacing: float, split=None) -> "Grid":
        """Grid whose spacing is ``spacing`` (box lengths must be multiples of it)."""
        counts = [int(round((hi - lo) / spacing)) + 1 for lo, hi in box]
        return cls(tuple(box), tuple(counts), split)

    @classmethod
    def product(cls, first: "Grid", second: "Grid") -> "Grid":
        return cls(first.box + second.box, first.counts + second.counts, first.dimension)

    @property
    def dimension(self) -> int:
        return len(self.box)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (c - 1) for (lo, hi), c in zip(self.box, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.box, self.counts)]

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape (*counts, dimension)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def blocks(self) -> tuple["Grid", "Grid"]:
        if self.split is None:
            raise NotProductGrid("grid carries no product structure")
        s = self.split
        return Grid(self.box[:s], self.counts[:s]), Grid(self.box[s:], self.counts[s:])

    def with_split(self, split: Optional[int]) -> "Grid":
        return Grid(self.box, self.counts, split)

    def node(self, index) -> np.ndarray:
        return np.array([ax[i] for ax, i in zip(self.axes(), index)])

    def offset_in(self, bigger: "Grid") -> tuple[int, ...]:
        """Index offset of this grid's nodes inside an aligned larger grid."""
        if bigger.dimension != self.dimension:
            raise BoxMismatch("dimension differs")
        offsets = []
        for (lo, hi), h, (blo, bhi), bh, c in zip(self.box, self.spacing, bigger.box,
                                                  bigger.spacing, self.counts):
            if not np.isclose(h, bh, rtol=1e-12, atol=0):
                raise BoxMismatch("spacings differ")
            k = (lo - blo) / bh
            if abs(k - round(k)) > 1e-8 or lo < blo - 1e-12 or hi > bhi + 1e-12:
                raise BoxMismatch("box not an aligned sub-box")
            offsets.append(int(round(k)))
        return tuple(offsets)

    def to_dict(self) -> dict:
        return {"box": [list(b) for b in self.box], "counts": list(self.counts), "split": self.split}


@dataclass(eq=False)
class GridFunction:
    """Sampled map from grid nodes to R^d with a domain mask.

    ``values`` has shape (*grid.counts, d); unmasked entries are stored as 0.
    Arrays are frozen after construction so derivative caches stay valid.
    """

    grid: Grid
    domain: DomainSpec
    values: np.ndarray
    mask: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape == self.grid.counts:
            values = values[..., None]
        if values.shape[:-1] != self.grid.counts or values.ndim != self.grid.dimension + 1:
            raise DimensionMismatch(f"values shape {values.shape} does not match grid {self.grid.counts}")
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != self.grid.counts:
            raise DimensionMismatch("mask shape does not match grid")
        if self.domain.dimension != self.grid.dimension:
            raise DimensionMismatch("domain and grid dimensions differ")
        if mask.all():
            finite = np.isfinite(values).all()
        else:
            values[~mask] = 0.0
            finite = np.isfinite(values[mask]).all()
        if not finite:
            raise ValueError("grid function values must be finite on masked nodes")
        values.setflags(write=False)
        mask.setflags(write=False)
        self.values = values
        self.mask = mask
        self._cache: dict = {}

    @classmethod
    def sample(cls, func: Callable, grid: Grid, domain: Optional[DomainSpec] = None,
               mask: Optional[np.ndarray] = None) -> "GridFunction":
        """Evaluate ``func(points)`` (points of shape (..., n)) on the masked nodes."""
        if domain is None:
            domain = full_space(grid.box)
        pts = grid.mesh()
        if mask is None:
            mask = domain.contains(pts)
        with np.errstate(all="ignore"):
            vals = np.asarray(func(pts), dtype=float)
        if vals.ndim < grid.dimension:
            vals = np.broadcast_to(vals, grid.counts)
        if vals.ndim == grid.dimension:
            vals = vals[..., None]
        vals = np.where(mask[..., None], vals, 0.0)
        return cls(grid, domain, vals, mask)

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    def derivative(self, alpha) -> "GridFunction":
        """Cached finite_difference(self, alpha)."""
        from wfs.core.fd import finite_difference

        alpha = MultiIndex.coerce(alpha)
        if alpha not in self._cache:
            self._cache[alpha] = finite_difference(self, alpha)
        return self._cache[alpha]

    def map_values(self, func) -> "GridFunction":
        return GridFunction(self.grid, self.domain, func(self.values), self.mask)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.domain, self.values + other.values, self.mask & other.mask)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.domain, self.values - other.values, self.mask & other.mask)

    def scale(self, c: float) -> "GridFunction":
        return GridFunction(self.grid, self.domain, c * self.values, self.mask)

    def multiply(self, scalar_field: np.ndarray) -> "GridFunction":
        """Pointwise product with a scalar array of shape grid.counts."""
        return GridFunction(self.grid, self.domain, scalar_field[..., None] * self.values, self.mask)

    # -- serialization -------------------------------------------------
    def header(self) -> dict:
        return {
            "schema": 1,
            "dimension": self.grid.dimension,
            "resolution": list(self.grid.counts),
            "box": [list(b) for b in self.grid.box],
            "split": self.grid.split,
            "d": self.d,
            "mask_rle": rle_encode(self.mask.ravel()),
            "order": "row-major",
            "byte_order": "little",
        }

    def to_json(self) -> str:
        out = self.header()
        out["values"] = self.values.ravel().tolist()
        return json.dumps(out)

    def to_bytes(self) -> bytes:
        """``WFSG`` magic, uint32 LE header length, UTF-8 JSON header, float64 LE values."""
        head = json.dumps(self.header()).encode("utf-8")
        payload = np.ascontiguousarray(self.values, dtype="<f8").tobytes()
        return _MAGIC + struct.pack("<I", len(head)) + head + payload

    @classmethod
    def _from_header(cls, head: dict, flat, domain) -> "GridFunction":
        grid = Grid(tuple(tuple(b) for b in head["box"]), tuple(head["resolution"]), head.get("split"))
        mask = rle_decode(head["mask_rle"]).reshape(grid.counts)
        values = np.asarray(flat, dtype=float).reshape(grid.counts + (head["d"],))
        return cls(grid, domain or full_space(grid.box), values, mask)

    @classmethod
    def from_json(cls, text: str, domain: Optional[DomainSpec] = None) -> "GridFunction":
        head = json.loads(text)
        return cls._from_header(head, head["values"], domain)

    @classmethod
    def from_bytes(cls, blob: bytes, domain: Optional[DomainSpec] = None) -> "GridFunction":
        if blob[:4] != _MAGIC:
            raise ValueError("not a WFSG blob")
        (n,) = struct.unpack("<I", blob[4:8])
        head = json.loads(blob[8:8 + n].decode("utf-8"))
        flat = np.frombuffer(blob[8 + n:], dtype="<f8")
        return cls._from_header(head, flat, domain)


def rle_encode(bits: np.ndarray) -> list[list[int]]:
    """Run-length encode a boolean array as [[value, run], ...]."""
    bits = np.asarray(bits, dtype=bool).ravel()
    if bits.size == 0:
        return []
    change = np.flatnonzero(bits[1:] != bits[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [bits.size]])
    return [[int(bits[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=bool)
    return np.concatenate([np.full(n, bool(v)) for v, n in runs])
