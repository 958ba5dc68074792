"""Mask and box primitives.

Masks are stored as uncompressed column-major run lengths, alternating
background/foreground and starting with a background run. IoUs are computed
from integer pixel counts and divided once at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np

from .errors import GeometryError


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned box in pixels, ``(x, y)`` is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise GeometryError(f"box origin must be non-negative, got ({self.x}, {self.y})")
        if not (self.w > 0 and self.h > 0):
            raise GeometryError(f"box extent must be positive, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class RleMask:
    height: int
    width: int
    counts: Tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.counts, tuple):
            object.__setattr__(self, "counts", tuple(self.counts))
        validate_rle(self.height, self.width, self.counts)

    @cached_property
    def run_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Foreground run starts, ends, and cumulative lengths (leading 0) as int64 arrays."""
        bounds = np.cumsum(np.asarray(self.counts, dtype=np.int64))
        n = len(self.counts) // 2
        starts = bounds[0 : 2 * n : 2]
        ends = bounds[1 : 2 * n : 2]
        cum = np.concatenate(([0], np.cumsum(ends - starts)))
        return starts, ends, cum

    @cached_property
    def area(self) -> int:
        return int(self.run_arrays[2][-1])

    @cached_property
    def intervals(self) -> Tuple[Tuple[int, int], ...]:
        """Foreground runs as half-open ``[start, end)`` linear column-major indices."""
        starts, ends, _ = self.run_arrays
        return tuple(zip(starts.tolist(), ends.tolist()))

    @cached_property
    def extent(self) -> Tuple[int, int, int, int] | None:
        """Inclusive ``(row_min, row_max, col_min, col_max)`` of foreground, None if empty."""
        starts, ends, _ = self.run_arrays
        if len(starts) == 0:
            return None
        h = self.height
        c0, r0 = np.divmod(starts, h)
        c1, r1 = np.divmod(ends - 1, h)
        if (c0 != c1).any():
            # a run crossing a column boundary touches the first and last rows
            row_min, row_max = 0, h - 1
        else:
            row_min, row_max = int(r0.min()), int(r1.max())
        return row_min, row_max, int(c0[0]), int(c1[-1])

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}


def validate_rle(height: int, width: int, counts: Sequence[int]) -> None:
    if not (isinstance(height, int) and isinstance(width, int)) or height < 1 or width < 1:
        raise GeometryError(f"mask size must be positive integers, got [{height}, {width}]")
    if len(counts) == 0:
        raise GeometryError("mask counts must not be empty")
    if not set(map(type, counts)) <= {int}:
        bad = next(c for c in counts if type(c) is not int)
        raise GeometryError(f"mask counts must be non-negative integers, got {bad!r}")
    arr = np.asarray(counts, dtype=np.int64)
    if (arr < 0).any():
        raise GeometryError(f"mask counts must be non-negative integers, got {int(arr.min())}")
    if (arr[1:] == 0).any():
        i = int(np.flatnonzero(arr[1:] == 0)[0]) + 1
        raise GeometryError(f"mask count #{i} is an interior zero run (non-canonical)")
    total = int(arr.sum())
    if total != height * width:
        raise GeometryError(f"mask counts sum to {total}, expected {height}*{width}={height * width}")


def decode(mask: RleMask) -> np.ndarray:
    """Expand a mask into a ``(height, width)`` boolean grid."""
    values = (np.arange(len(mask.counts)) % 2).astype(bool)
    flat = np.repeat(values, mask.counts)
    return flat.reshape((mask.width, mask.height)).T


def encode(grid) -> RleMask:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise GeometryError(f"expected a 2-D grid, got shape {grid.shape}")
    h, w = grid.shape
    flat = grid.astype(bool).T.reshape(-1)
    # positions where the value flips, plus both ends
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(h, w, tuple(counts))


# above this many runs the vectorized path beats the merge loop
_VECTOR_RUNS = 48


def _covered_before(mask: RleMask, xs: np.ndarray) -> np.ndarray:
    """Foreground pixels of ``mask`` at linear positions ``< x`` for each x."""
    starts, ends, cum = mask.run_arrays
    k = np.searchsorted(ends, xs, side="right")
    full = cum[k]
    nxt = np.append(starts, np.iinfo(np.int64).max)[k]
    return full + np.clip(xs - nxt, 0, None)


def intersection_area(a: RleMask, b: RleMask) -> int:
    if len(a.intervals) + len(b.intervals) > _VECTOR_RUNS:
        starts, ends, _ = a.run_arrays
        return int((_covered_before(b, ends) - _covered_before(b, starts)).sum())
    return _intersection_merge(a, b)


def _intersection_merge(a: RleMask, b: RleMask) -> int:
    ia, ib = a.intervals, b.intervals
    i = j = 0
    total = 0
    while i < len(ia) and j < len(ib):
        s0, e0 = ia[i]
        s1, e1 = ib[j]
        lo = s0 if s0 > s1 else s1
        hi = e0 if e0 < e1 else e1
        if hi > lo:
            total += hi - lo
        if e0 < e1:
            i += 1
        else:
            j += 1
    return total


def _extents_disjoint(a: RleMask, b: RleMask) -> bool:
    ea, eb = a.extent, b.extent
    if ea is None or eb is None:
        return True
    return ea[1] < eb[0] or eb[1] < ea[0] or ea[3] < eb[2] or eb[3] < ea[2]


def mask_iou(a: RleMask, b: RleMask) -> float:
    if (a.height, a.width) != (b.height, b.width):
        raise GeometryError(
            f"mask dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    if _extents_disjoint(a, b):
        return 0.0
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def box_iou(a: Box2D, b: Box2D) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def tight_box(mask: RleMask) -> Box2D:
    ext = mask.extent
    if ext is None:
        raise GeometryError("cannot compute the bounding box of an empty mask")
    r0, r1, c0, c1 = ext
    return Box2D(c0, r0, c1 - c0 + 1, r1 - r0 + 1)


def from_intervals(height: int, width: int, intervals) -> RleMask:
    """Build a canonical mask from sorted, non-overlapping ``[start, end)`` foreground runs."""
    counts = []
    pos = 0
    for start, end in intervals:
        if end <= start:
            continue
        if counts and start == pos:
            counts[-1] += end - start
        else:
            counts.append(start - pos)
            counts.append(end - start)
        pos = end
    total = height * width
    if pos < total or not counts:
        counts.append(total - pos)
    return RleMask(height, width, tuple(counts))


def rectangle_mask(height: int, width: int, x: int, y: int, w: int, h: int) -> RleMask:
    """Filled rectangle with top-left corner ``(x, y)``."""
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
        raise GeometryError(f"rectangle [{x}, {y}, {w}, {h}] does not fit a {height}x{width} grid")
    return from_intervals(
        height, width, ((col * height + y, col * height + y + h) for col in range(x, x + w))
    )
