"""Closed real intervals and boxes.

Only the operations needed by the quadratic certificate are provided:
addition, subtraction, multiplication and scaling.  Every operation takes a
``rigorous`` flag; when set, the floating point result is widened outward by
one unit in the last place on each side so that the exact real result is
enclosed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "IntervalError",
    "Interval",
    "BoxVec",
    "hull",
    "add",
    "sub",
    "mul",
    "scale",
    "arith",
]


class IntervalError(ValueError):
    """Raised for invalid interval construction or indeterminate forms."""


def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


@dataclass(frozen=True, slots=True)
class Interval:
    """The closed interval ``[lo, hi]``; endpoints may be infinite."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise IntervalError("interval endpoint is NaN")
        if lo > hi:
            raise IntervalError(f"empty interval [{lo}, {hi}]")
        if lo == math.inf or hi == -math.inf:
            raise IntervalError(f"degenerate infinite interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @property
    def inf(self) -> float:
        return self.lo

    @property
    def sup(self) -> float:
        return self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        if not self.is_bounded():
            raise IntervalError(f"midpoint of unbounded interval {self}")
        return 0.5 * (self.lo + self.hi)

    def is_bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def subset_of(self, other: Interval) -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        if isinstance(other, Interval):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> Interval:
        return Interval(-self.hi, -self.lo)

    def __repr__(self) -> str:
        return f"[{self.lo:g}, {self.hi:g}]"


def _coerce(x) -> Interval:
    if isinstance(x, Interval):
        return x
    return Interval.point(float(x))


def _make(lo: float, hi: float, rigorous: bool) -> Interval:
    if math.isnan(lo) or math.isnan(hi):
        raise IntervalError("indeterminate interval form")
    if rigorous:
        lo, hi = _down(lo), _up(hi)
    return Interval(lo, hi)


def add(a: Interval, b: Interval, rigorous: bool = False) -> Interval:
    return _make(a.lo + b.lo, a.hi + b.hi, rigorous)


def sub(a: Interval, b: Interval, rigorous: bool = False) -> Interval:
    return _make(a.lo - b.hi, a.hi - b.lo, rigorous)


def _times(x: float, y: float) -> float:
    # 0 * inf is taken as 0, the usual convention for closed intervals
    if x == 0.0 or y == 0.0:
        return 0.0
    return x * y


def mul(a: Interval, b: Interval, rigorous: bool = False) -> Interval:
    p = (_times(a.lo, b.lo), _times(a.lo, b.hi), _times(a.hi, b.lo), _times(a.hi, b.hi))
    return _make(min(p), max(p), rigorous)


def scale(a: Interval, s: float, rigorous: bool = False) -> Interval:
    p, q = _times(a.lo, s), _times(a.hi, s)
    return _make(min(p, q), max(p, q), rigorous)


_OPS = {"+": add, "-": sub, "*": mul, "x": mul, "×": mul, "−": sub}


def arith(a: Interval, b: Interval, op: str, rigorous: bool = False) -> Interval:
    """Apply ``op`` (one of ``+``, ``-``, ``*``) to two intervals."""
    try:
        fn = _OPS[op]
    except KeyError:
        raise IntervalError(f"unsupported interval operation {op!r}") from None
    return fn(a, b, rigorous)


def hull(values: Iterable) -> Interval:
    """Smallest interval containing all given numbers and intervals."""
    lo, hi = math.inf, -math.inf
    seen = False
    for v in values:
        seen = True
        if isinstance(v, Interval):
            lo, hi = min(lo, v.lo), max(hi, v.hi)
        else:
            v = float(v)
            if math.isnan(v):
                raise IntervalError("NaN in hull input")
            lo, hi = min(lo, v), max(hi, v)
    if not seen:
        raise IntervalError("empty hull")
    return Interval(lo, hi)


@dataclass(frozen=True)
class BoxVec:
    """An interval vector (box) of dimension ``len(comps)``."""

    comps: tuple[Interval, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "comps", tuple(self.comps))

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> BoxVec:
        lo, hi = np.asarray(lo, dtype=float).ravel(), np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise IntervalError("box bounds have different lengths")
        return cls(tuple(Interval(a, b) for a, b in zip(lo, hi)))

    def __len__(self) -> int:
        return len(self.comps)

    def __iter__(self):
        return iter(self.comps)

    def __getitem__(self, i: int) -> Interval:
        return self.comps[i]

    @property
    def lo(self) -> np.ndarray:
        return np.array([c.lo for c in self.comps], dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.array([c.hi for c in self.comps], dtype=float)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def mid(self) -> np.ndarray:
        return np.array([c.mid for c in self.comps])

    def is_bounded(self) -> bool:
        return all(c.is_bounded() for c in self.comps)

    def volume(self) -> float:
        return float(np.prod(self.width)) if self.comps else 1.0

    def contains(self, x: Sequence[float]) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == (len(self),) and bool(np.all((self.lo <= x) & (x <= self.hi)))

    def subset_of(self, other: BoxVec) -> bool:
        return len(self) == len(other) and all(a.subset_of(b) for a, b in zip(self, other))

    def __repr__(self) -> str:
        return "x".join(f"[{c.lo:g},{c.hi:g}]" for c in self.comps)
