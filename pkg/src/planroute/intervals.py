"""Finite unions of half-open subintervals of [0, 1).

Cars of a planner are identified with points of [0, 1), so every subset of a
planner's traffic that the engine manipulates is an :class:`IntervalSet`.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Iterator, Tuple

from .numeric import Number

Pair = Tuple[Number, Number]


class IntervalSet:
    """Sorted, disjoint, non-empty ``[a, b)`` pieces inside ``[0, 1)``.

    Adjacent pieces are merged on construction so equal sets compare equal.
    Instances are immutable and hashable.
    """

    __slots__ = ("_pieces", "_measure")

    def __init__(self, pieces: Iterable[Pair] = ()):
        cleaned = []
        for a, b in pieces:
            if not (0 <= a <= b <= 1):
                raise ValueError(f"interval [{a}, {b}) is not inside [0, 1)")
            if a < b:
                cleaned.append((a, b))
        cleaned.sort()
        merged: list = []
        for a, b in cleaned:
            if merged and a <= merged[-1][1]:
                if b > merged[-1][1]:
                    merged[-1] = (merged[-1][0], b)
            else:
                merged.append((a, b))
        self._pieces = tuple(merged)
        self._measure = None

    @classmethod
    def _trusted(cls, pieces) -> "IntervalSet":
        # pieces already sorted, disjoint, non-adjacent and non-empty
        out = cls.__new__(cls)
        out._pieces = tuple(pieces)
        out._measure = None
        return out

    @classmethod
    def full(cls) -> "IntervalSet":
        return _FULL

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls()

    @classmethod
    def segment(cls, j: int, m: int) -> "IntervalSet":
        """The j-th of m equal segments, ``[(j-1)/m, j/m)`` (1-based)."""
        if not 1 <= j <= m:
            raise ValueError(f"segment index {j} outside 1..{m}")
        return cls([(Fraction(j - 1, m), Fraction(j, m))])

    @property
    def pieces(self) -> Tuple[Pair, ...]:
        return self._pieces

    def __iter__(self) -> Iterator[Pair]:
        return iter(self._pieces)

    def __len__(self) -> int:
        return len(self._pieces)

    def __bool__(self) -> bool:
        return bool(self._pieces)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._pieces == other._pieces

    def __hash__(self) -> int:
        return hash(self._pieces)

    def __repr__(self) -> str:
        inner = " ∪ ".join(f"[{a}, {b})" for a, b in self._pieces)
        return f"IntervalSet({inner or '∅'})"

    @property
    def measure(self) -> Number:
        if self._measure is None:
            self._measure = sum((b - a for a, b in self._pieces), Fraction(0))
        return self._measure

    def contains(self, x: Number) -> bool:
        return any(a <= x < b for a, b in self._pieces)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self._pieces + other._pieces)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        xs, ys = self._pieces, other._pieces
        while i < len(xs) and j < len(ys):
            a = max(xs[i][0], ys[j][0])
            b = min(xs[i][1], ys[j][1])
            if a < b:
                out.append((a, b))
            if xs[i][1] < ys[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet._trusted(out)

    def complement(self) -> "IntervalSet":
        out = []
        cursor: Number = Fraction(0)
        for a, b in self._pieces:
            if cursor < a:
                out.append((cursor, a))
            cursor = b
        if cursor < 1:
            out.append((cursor, Fraction(1)))
        return IntervalSet._trusted(out)

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        return self.intersection(other.complement())

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def isdisjoint(self, other: "IntervalSet") -> bool:
        xs, ys = self._pieces, other._pieces
        i = j = 0
        while i < len(xs) and j < len(ys):
            if max(xs[i][0], ys[j][0]) < min(xs[i][1], ys[j][1]):
                return False
            if xs[i][1] < ys[j][1]:
                i += 1
            else:
                j += 1
        return True

    def issubset(self, other: "IntervalSet") -> bool:
        return not self.difference(other)

    def take_cyclic(self, start: Number, amount: Number) -> Tuple["IntervalSet", Number]:
        """Walk the set from ``start`` (wrapping past 1) and collect ``amount`` of measure.

        Returns the collected subset and the position where the walk stopped.
        If ``amount`` is at least the set's measure the whole set is returned and
        the position is unchanged.
        """
        if amount < 0:
            raise ValueError("amount must be nonnegative")
        if amount == 0 or not self._pieces:
            return IntervalSet(), start
        if amount >= self.measure:
            return self, start
        # Pieces in walk order: the part at/after start, then the wrap-around.
        ordered = []
        for a, b in self._pieces:
            if b > start:
                ordered.append((max(a, start), b))
        for a, b in self._pieces:
            if a < start:
                ordered.append((a, min(b, start)))
        taken = []
        remaining = amount
        for a, b in ordered:
            length = b - a
            if length >= remaining:
                taken.append((a, a + remaining))
                end = a + remaining
                return IntervalSet(taken), (end if end < 1 else end - 1)
            taken.append((a, b))
            remaining -= length
        raise AssertionError("measure bookkeeping failed")  # pragma: no cover


_FULL = IntervalSet([(Fraction(0), Fraction(1))])


def rotate_assignment(pointer: Number, fraction: Number) -> Tuple[IntervalSet, Number]:
    """Bottom set ``[b, b + fraction)`` taken modulo 1, and the advanced pointer."""
    if not 0 <= fraction <= 1:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    if not 0 <= pointer < 1:
        raise ValueError(f"pointer {pointer} outside [0, 1)")
    if fraction == 1:
        return IntervalSet.full(), pointer
    if fraction == 0:
        return IntervalSet(), pointer
    end = pointer + fraction
    if end <= 1:
        chosen = IntervalSet._trusted([(pointer, end)])
    else:
        chosen = IntervalSet([(pointer, 1), (0, end - 1)])
    return chosen, end % 1
