from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator


@dataclass(frozen=True)
class MultiIndex:
    """Tuple of nonnegative integers indexing a partial derivative.

    Comparison with ``<=`` is entrywise, so ``tau <= alpha`` is a partial order
    (not the lexicographic order of plain tuples).
    """

    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if any(e < 0 for e in entries):
            raise ValueError(f"multi-index entries must be nonnegative, got {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def coerce(cls, alpha: "MultiIndex | Iterable[int] | int") -> "MultiIndex":
        if isinstance(alpha, MultiIndex):
            return alpha
        if isinstance(alpha, int):
            return cls((alpha,))
        return cls(tuple(alpha))

    @classmethod
    def zero(cls, n: int) -> "MultiIndex":
        return cls((0,) * n)

    @classmethod
    def unit(cls, n: int, i: int) -> "MultiIndex":
        return cls(tuple(1 if j == i else 0 for j in range(n)))

    def order(self) -> int:
        return sum(self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __le__(self, other: "MultiIndex") -> bool:
        other = MultiIndex.coerce(other)
        return len(self) == len(other) and all(a <= b for a, b in zip(self, other))

    def __lt__(self, other: "MultiIndex") -> bool:
        other = MultiIndex.coerce(other)
        return self <= other and self.entries != other.entries

    def __add__(self, other) -> "MultiIndex":
        other = MultiIndex.coerce(other)
        return MultiIndex(tuple(a + b for a, b in zip(self, other)))

    def __sub__(self, other) -> "MultiIndex":
        other = MultiIndex.coerce(other)
        return MultiIndex(tuple(a - b for a, b in zip(self, other)))

    def concat(self, other) -> "MultiIndex":
        return MultiIndex(self.entries + MultiIndex.coerce(other).entries)

    def below(self) -> list["MultiIndex"]:
        """All tau with tau <= self, in row-major order."""
        return [MultiIndex(t) for t in itertools.product(*(range(a + 1) for a in self))]

    def __repr__(self):
        return f"MultiIndex{self.entries}"


def multi_indices(n: int, max_order: int, exact: bool = False) -> list[MultiIndex]:
    """Every multi-index of length ``n`` with order <= ``max_order`` (or == when exact)."""
    out = []
    for t in itertools.product(range(max_order + 1), repeat=n):
        s = sum(t)
        if s == max_order or (not exact and s <= max_order):
            out.append(MultiIndex(t))
    return out
