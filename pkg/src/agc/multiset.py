"""Finite multisets of symbol objects (region contents of classic P systems)."""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator, Mapping

from .errors import CountOverflow, InsufficientObjects, ParseError

MAX_COUNT = 2**63 - 1

_ITEM = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_']*)\s*(?::\s*(\d+))?\s*$")


class Multiset(Mapping[str, int]):
    """Immutable map from symbol to positive count.

    Absent symbols have count 0; zero counts are never stored.  Counts are
    bounded by the int64 range and exceeding it raises :class:`CountOverflow`.
    """

    __slots__ = ("_counts", "_hash")

    def __init__(self, items: Mapping[str, int] | Iterable[str] | None = None):
        counts: dict[str, int] = {}
        if items is None:
            pass
        elif isinstance(items, Mapping):
            for sym, n in items.items():
                n = int(n)
                if n < 0:
                    raise ValueError(f"negative count for {sym!r}")
                if n:
                    counts[sym] = counts.get(sym, 0) + n
        else:
            for sym in items:
                counts[sym] = counts.get(sym, 0) + 1
        for sym, n in counts.items():
            if n > MAX_COUNT:
                raise CountOverflow(f"count of {sym!r} exceeds {MAX_COUNT}")
        self._counts = counts
        self._hash = None

    @classmethod
    def parse(cls, text: str) -> "Multiset":
        """Parse ``"a:2, b:1"``; a bare symbol means count 1."""
        counts: dict[str, int] = {}
        if not text.strip():
            return cls()
        offset = 0
        for part in text.split(","):
            m = _ITEM.match(part)
            if not m:
                raise ParseError(f"bad multiset item {part.strip()!r}", 1, offset + 1, code="multiset-syntax")
            n = int(m.group(2)) if m.group(2) is not None else 1
            counts[m.group(1)] = counts.get(m.group(1), 0) + n
            offset += len(part) + 1
        return cls(counts)

    def __getitem__(self, sym: str) -> int:
        return self._counts.get(sym, 0)

    def __iter__(self) -> Iterator[str]:
        return iter(self._counts)

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, sym: object) -> bool:
        return sym in self._counts

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Multiset):
            return self._counts == other._counts
        if isinstance(other, Mapping):
            return self._counts == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._counts.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"Multiset({{{', '.join(f'{k!r}: {v}' for k, v in sorted(self._counts.items()))}}})"

    def __str__(self) -> str:
        return ", ".join(f"{k}:{v}" for k, v in sorted(self._counts.items()))

    @property
    def cardinality(self) -> int:
        return sum(self._counts.values())

    def contains(self, other: Mapping[str, int]) -> bool:
        return contains_submultiset(self, other)

    def __add__(self, other: Mapping[str, int]) -> "Multiset":
        return merge(self, other)

    def __sub__(self, other: Mapping[str, int]) -> "Multiset":
        return checked_subtract(self, other)

    def scaled(self, k: int) -> "Multiset":
        return Multiset({s: n * k for s, n in self._counts.items()})

    def to_dict(self) -> dict[str, int]:
        return dict(sorted(self._counts.items()))


def contains_submultiset(m: Mapping[str, int], u: Mapping[str, int]) -> bool:
    return all(m.get(sym, 0) >= n for sym, n in u.items())


def checked_subtract(m: Mapping[str, int], u: Mapping[str, int]) -> Multiset:
    out = dict(m)
    for sym, n in u.items():
        have = out.get(sym, 0)
        if have < n:
            raise InsufficientObjects(f"need {n} x {sym!r}, have {have}")
        out[sym] = have - n
    return Multiset(out)


def merge(m1: Mapping[str, int], m2: Mapping[str, int]) -> Multiset:
    out = dict(m1)
    for sym, n in m2.items():
        out[sym] = out.get(sym, 0) + n
    return Multiset(out)
