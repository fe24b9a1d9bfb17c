"""Grid-anchored rectangles and 3-d tensors.

Every tensor in the library remembers which global grid coordinates it
occupies, so "the same pixel" can be compared across a one-shot forward pass
and a tiled one without extra bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContainmentError, ParameterError, ShapeError


@dataclass(frozen=True, order=True)
class Rect:
    """Half-open integer rectangle ``[row_start, row_end) x [col_start, col_end)``."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self) -> None:
        for name in ("row_start", "row_end", "col_start", "col_end"):
            value = getattr(self, name)
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
                raise ParameterError(f"Rect.{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.row_start >= self.row_end or self.col_start >= self.col_end:
            raise ParameterError(f"empty rect {self}")

    @classmethod
    def of_size(cls, height: int, width: int, row: int = 0, col: int = 0) -> Rect:
        return cls(row, row + height, col, col + width)

    @classmethod
    def square(cls, start: int, end: int) -> Rect:
        return cls(start, end, start, end)

    def height(self) -> int:
        return self.row_end - self.row_start

    def width(self) -> int:
        return self.col_end - self.col_start

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height(), self.width())

    def area(self) -> int:
        return self.height() * self.width()

    def contains(self, other: Rect) -> bool:
        return (
            self.row_start <= other.row_start
            and other.row_end <= self.row_end
            and self.col_start <= other.col_start
            and other.col_end <= self.col_end
        )

    def contains_point(self, i: int, j: int) -> bool:
        return self.row_start <= i < self.row_end and self.col_start <= j < self.col_end

    def intersect(self, other: Rect) -> Rect | None:
        r0 = max(self.row_start, other.row_start)
        r1 = min(self.row_end, other.row_end)
        c0 = max(self.col_start, other.col_start)
        c1 = min(self.col_end, other.col_end)
        if r0 >= r1 or c0 >= c1:
            return None
        return Rect(r0, r1, c0, c1)

    def union_bounds(self, other: Rect) -> Rect:
        return Rect(
            min(self.row_start, other.row_start),
            max(self.row_end, other.row_end),
            min(self.col_start, other.col_start),
            max(self.col_end, other.col_end),
        )

    def shift(self, drow: int, dcol: int) -> Rect:
        return Rect(self.row_start + drow, self.row_end + drow, self.col_start + dcol, self.col_end + dcol)

    def expand(self, before: int, after: int | None = None) -> Rect:
        """Grow by ``before`` on the top/left sides and ``after`` on the bottom/right."""
        if after is None:
            after = before
        return Rect(self.row_start - before, self.row_end + after, self.col_start - before, self.col_end + after)

    def slices(self, origin: Rect) -> tuple[slice, slice]:
        """Array slices selecting this rect inside an array anchored at ``origin``."""
        return (
            slice(self.row_start - origin.row_start, self.row_end - origin.row_start),
            slice(self.col_start - origin.col_start, self.col_end - origin.col_start),
        )

    def __str__(self) -> str:
        return f"[{self.row_start},{self.row_end})x[{self.col_start},{self.col_end})"


@dataclass(frozen=True)
class PhaseIndex:
    """Position of a global pixel inside its stationarity period."""

    row_phase: int
    col_phase: int

    @classmethod
    def of(cls, i: int, j: int, period: tuple[int, int]) -> PhaseIndex:
        return cls(i % period[0], j % period[1])


class Tensor3:
    """Immutable ``(rows, cols, channels)`` float64 array pinned to a global rect."""

    __slots__ = ("anchor", "data")

    def __init__(self, anchor: Rect, data: np.ndarray, *, _owned: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"tensor data must be 3-d, got shape {arr.shape}")
        if arr.shape[:2] != anchor.shape:
            raise ShapeError(f"data spatial shape {arr.shape[:2]} does not match anchor {anchor}")
        if arr.shape[2] < 1:
            raise ShapeError("tensor needs at least one channel")
        if not np.isfinite(arr).all():
            raise ShapeError("tensor contains non-finite values")
        if arr is data and arr.flags.writeable and not _owned:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Tensor3 is immutable")

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def value(self, i: int, j: int, c: int) -> float:
        """Element at global coordinates ``(i, j)`` and channel ``c``."""
        if not self.anchor.contains_point(i, j):
            raise ContainmentError(f"point ({i}, {j}) outside {self.anchor}")
        return float(self.data[i - self.anchor.row_start, j - self.anchor.col_start, c])

    def __repr__(self) -> str:
        return f"Tensor3(anchor={self.anchor}, channels={self.channels})"


def subpatch(t: Tensor3, r: Rect) -> Tensor3:
    """Copy the part of ``t`` that lies on ``r``."""
    if not t.anchor.contains(r):
        raise ContainmentError(f"rect {r} is not contained in tensor anchor {t.anchor}")
    rows, cols = r.slices(t.anchor)
    return Tensor3(r, t.data[rows, cols, :].copy(), _owned=True)


def max_abs_diff(a: Tensor3, b: Tensor3) -> float:
    if a.anchor != b.anchor or a.channels != b.channels:
        raise ShapeError(
            f"cannot compare {a.anchor} x {a.channels}ch with {b.anchor} x {b.channels}ch"
        )
    return float(np.max(np.abs(a.data - b.data)))
