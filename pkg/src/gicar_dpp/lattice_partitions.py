"""Finite lattice windows, point configurations and integer partitions.

Lattice points are stored as integer indices together with the window
offset, so membership tests on half-integer lattices stay exact.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "LatticeKind",
    "Window",
    "Configuration",
    "Partition",
    "FrobeniusCoords",
    "enumerate_configurations",
    "partitions",
    "partitions_up_to",
    "frobenius_coordinates",
    "partition_from_frobenius",
    "embed_partition",
]


class LatticeKind(str, Enum):
    FULL = "full-line"
    HALF = "half-line"


@dataclass(frozen=True)
class Window:
    """Integer indices ``lo..hi`` mapped to points ``index + offset``."""

    lo: int
    hi: int
    offset: float = 0.0
    kind: LatticeKind = LatticeKind.FULL

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ValidationError("window bounds must be integers")
        if self.lo > self.hi:
            raise DomainError(f"empty window: lo={self.lo} > hi={self.hi}")
        if self.kind == LatticeKind.HALF and self.lo != 0:
            raise ValidationError("half-line windows start at index 0")

    @classmethod
    def half_line(cls, size: int, offset: float = 0.0) -> "Window":
        return cls(0, size - 1, offset, LatticeKind.HALF)

    @classmethod
    def half_integer(cls, lo_point: float, hi_point: float) -> "Window":
        """Full-line window on Z + 1/2 spanning the points lo_point..hi_point."""
        lo = lo_point - 0.5
        hi = hi_point - 0.5
        if lo != int(lo) or hi != int(hi):
            raise ValidationError("endpoints must be half-integers")
        return cls(int(lo), int(hi), 0.5, LatticeKind.FULL)

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @property
    def points(self) -> np.ndarray:
        return self.indices + self.offset

    def position(self, index: int) -> int:
        """Row position of a lattice index inside this window."""
        if not self.lo <= index <= self.hi:
            raise DomainError(f"index {index} outside window [{self.lo}, {self.hi}]")
        return index - self.lo

    def index_of(self, point: float) -> int:
        idx = point - self.offset
        if idx != round(idx):
            raise DomainError(f"{point} is not a lattice point of offset {self.offset}")
        return int(round(idx))

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "offset": self.offset, "kind": self.kind.value}


@dataclass(frozen=True)
class Configuration:
    """A simple finite configuration: strictly increasing occupied indices."""

    indices: tuple[int, ...]
    window: Window

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise ValidationError("configuration indices must be strictly increasing")
        if idx and (idx[0] < self.window.lo or idx[-1] > self.window.hi):
            raise DomainError("configuration leaves its window")

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=float) + self.window.offset

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int) - self.window.lo

    def to_json(self) -> list[int]:
        return list(self.indices)


def enumerate_configurations(window: Window, n: int) -> list[Configuration]:
    """All n-point configurations of the window in lexicographic order."""
    if n < 0 or n > window.size:
        raise DomainError(f"cannot place {n} points in a window of {window.size}")
    return [Configuration(c, window) for c in itertools.combinations(range(window.lo, window.hi + 1), n)]


class Partition(tuple):
    """Integer partition stored as its weakly decreasing positive parts."""

    def __new__(cls, parts: Sequence[int] = ()):
        parts = tuple(int(p) for p in parts)
        while parts and parts[-1] == 0:
            parts = parts[:-1]
        if any(p <= 0 for p in parts):
            raise ValidationError(f"parts must be positive: {parts}")
        if any(a < b for a, b in zip(parts, parts[1:])):
            raise ValidationError(f"parts must be weakly decreasing: {parts}")
        return super().__new__(cls, parts)

    def __repr__(self) -> str:
        return f"Partition({list(self)})"

    @property
    def size(self) -> int:
        return sum(self)

    def part(self, i: int) -> int:
        """i-th part, 1-based, zero beyond the length."""
        return self[i - 1] if i <= len(self) else 0

    def conjugate(self) -> "Partition":
        if not self:
            return Partition()
        return Partition([sum(1 for p in self if p > j) for j in range(self[0])])

    def contains(self, other: Sequence[int]) -> bool:
        """Diagram inclusion other ⊆ self."""
        return len(other) <= len(self) and all(o <= s for o, s in zip(other, self))

    def boxes(self) -> Iterator[tuple[int, int]]:
        """Cells (row, column), both 1-based."""
        for i, p in enumerate(self, start=1):
            for j in range(1, p + 1):
                yield i, j

    def addable_rows(self) -> list[int]:
        """Rows (1-based) where a box can be added."""
        return [i for i in range(1, len(self) + 2) if i == 1 or self.part(i - 1) > self.part(i)]

    def removable_rows(self) -> list[int]:
        return [i for i in range(1, len(self) + 1) if self.part(i) > self.part(i + 1)]

    def add_box(self, row: int) -> "Partition":
        parts = list(self) + [0]
        parts[row - 1] += 1
        return Partition(parts)

    def remove_box(self, row: int) -> "Partition":
        parts = list(self)
        parts[row - 1] -= 1
        return Partition(parts)

    def subpartitions(self) -> Iterator["Partition"]:
        """All mu contained in this diagram."""

        def rec(i: int, bound: int, acc: list[int]):
            if i == len(self):
                yield Partition(acc)
                return
            for p in range(min(bound, self[i]), -1, -1):
                if p == 0:
                    yield Partition(acc)
                else:
                    yield from rec(i + 1, p, acc + [p])

        yield from rec(0, self[0] if self else 0, [])

    def to_json(self) -> list[int]:
        return list(self)


def partitions(n: int, max_length: int | None = None) -> Iterator[Partition]:
    """Partitions of n in reverse lexicographic order, (n) first.

    With max_length, only partitions with at most that many parts are produced.
    """
    if n < 0:
        raise DomainError("negative size")
    cap = n if max_length is None else max_length

    def rec(rest: int, bound: int, acc: list[int]):
        if rest == 0:
            yield Partition(acc)
            return
        slots = cap - len(acc)
        if slots <= 0 or rest > slots * bound:
            return
        for p in range(min(rest, bound), 0, -1):
            yield from rec(rest - p, p, acc + [p])

    yield from rec(n, n, [])


def partitions_up_to(n: int) -> list[Partition]:
    return [lam for k in range(n + 1) for lam in partitions(k)]


@dataclass(frozen=True)
class FrobeniusCoords:
    arms: tuple
    legs: tuple
    modified: bool = False

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "legs", tuple(self.legs))
        if len(self.arms) != len(self.legs):
            raise ValidationError("arms and legs must have equal length")
        floor = Fraction(1, 2) if self.modified else 0
        for seq in (self.arms, self.legs):
            if any(a <= b for a, b in zip(seq, seq[1:])):
                raise ValidationError(f"Frobenius coordinates must strictly decrease: {seq}")
            if seq and seq[-1] < floor:
                raise ValidationError(f"Frobenius coordinates below {floor}: {seq}")
            if self.modified and any(Fraction(s) - Fraction(1, 2) != int(Fraction(s) - Fraction(1, 2)) for s in seq):
                raise ValidationError("modified coordinates must be half-integers")
            if not self.modified and any(int(s) != s for s in seq):
                raise ValidationError("ordinary coordinates must be integers")

    @property
    def rank(self) -> int:
        return len(self.arms)

    def ordinary(self) -> "FrobeniusCoords":
        if not self.modified:
            return self
        half = Fraction(1, 2)
        return FrobeniusCoords(
            tuple(int(a - half) for a in self.arms), tuple(int(b - half) for b in self.legs), False
        )


def frobenius_coordinates(lam: Sequence[int], modified: bool = False) -> FrobeniusCoords:
    lam = Partition(lam)
    conj = lam.conjugate()
    d = sum(1 for i, p in enumerate(lam, start=1) if p >= i)
    arms = tuple(lam[i] - (i + 1) for i in range(d))
    legs = tuple(conj[i] - (i + 1) for i in range(d))
    if modified:
        half = Fraction(1, 2)
        return FrobeniusCoords(tuple(a + half for a in arms), tuple(b + half for b in legs), True)
    return FrobeniusCoords(arms, legs, False)


def partition_from_frobenius(coords: FrobeniusCoords) -> Partition:
    c = coords.ordinary()
    d = c.rank
    rows = [c.arms[i] + i + 1 for i in range(d)]
    cols = [c.legs[j] + j + 1 for j in range(d)]
    depth = cols[0] if d else 0
    for i in range(d + 1, depth + 1):
        rows.append(sum(1 for col in cols if col >= i))
    return Partition(rows)


def embed_partition(lam: Sequence[int], window: Window) -> Configuration:
    """Point configuration {lam_i - i + 1/2} intersected with a Z + 1/2 window."""
    lam = Partition(lam)
    if window.kind != LatticeKind.FULL or (window.offset - 0.5) % 1.0 != 0.0:
        raise ValidationError("partitions embed into a full-line window on Z + 1/2")
    shift = int(round(window.offset - 0.5))
    # index of the point lam_i - i + 1/2 is lam_i - i - shift
    top = lam.part(1) - 1 - shift
    if top > window.hi:
        raise DomainError(f"window hi={window.hi} misses the largest point (index {top})")
    if lam and lam[-1] - len(lam) - shift < window.lo:
        raise DomainError("window lo cuts through the non-trivial rows of the partition")
    idx = []
    i = 1
    while True:
        k = lam.part(i) - i - shift
        if k < window.lo:
            break
        idx.append(k)
        i += 1
    return Configuration(tuple(sorted(idx)), window)


def partition_json(lam: Sequence[int]) -> str:
    return json.dumps(list(Partition(lam)))
