"""Nested multi-level partitions (segmentation hierarchies) over pixel grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["Segment", "SegmentationHierarchy", "build_quadtree_hierarchy", "segment_mean"]


@dataclass
class Segment:
    """One region of the grid at one hierarchy level.

    ``rect`` is (row0, row1, col0, col1), half-open, kept for cheap shape
    features.  ``pixels`` are row-major indices into the grid.
    """

    seg_id: int
    level: int
    pixels: np.ndarray
    parent: Optional[int]
    rect: tuple

    @property
    def size(self) -> int:
        return int(self.pixels.size)


class SegmentationHierarchy:
    """Ordered list of partitions, coarse to fine, with child-in-parent nesting."""

    def __init__(self, width: int, height: int, levels):
        self.width = width
        self.height = height
        self.levels = levels  # list[list[Segment]]
        self._validate()
        # Per-level pixel -> segment-id maps, used for vectorized pooling.
        self.level_maps = []
        for segs in levels:
            m = np.full(self.num_pixels, -1, dtype=np.intp)
            for s in segs:
                m[s.pixels] = s.seg_id
            self.level_maps.append(m)

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def segments_at(self, level: int):
        return self.levels[level]

    def all_segments(self):
        for segs in self.levels:
            yield from segs

    def _validate(self):
        if len(self.levels) < 1:
            raise ValueError("hierarchy needs at least one level")
        j = self.num_pixels
        for li, segs in enumerate(self.levels):
            seen = np.zeros(j, dtype=bool)
            for s in segs:
                if s.size == 0:
                    raise ValueError("empty segment")
                if seen[s.pixels].any():
                    raise ValueError(f"level {li} is not a partition (overlap)")
                seen[s.pixels] = True
            if not seen.all():
                raise ValueError(f"level {li} does not cover the grid")
        for li in range(1, len(self.levels)):
            parents = self.levels[li - 1]
            for s in self.levels[li]:
                if s.parent is None:
                    raise ValueError("non-root segment without a parent")
                pset = parents[s.parent]
                if not np.isin(s.pixels, pset.pixels).all():
                    raise ValueError("child segment not nested in its parent")


def _split_extent(lo: int, hi: int):
    """Halve [lo, hi); returns one or two sub-extents (one when length 1)."""
    if hi - lo <= 1:
        return [(lo, hi)]
    mid = lo + (hi - lo) // 2
    return [(lo, mid), (mid, hi)]


def build_quadtree_hierarchy(width: int, height: int, levels: int) -> SegmentationHierarchy:
    """Recursive halving hierarchy: level 0 is the whole grid, each level
    splits every parent rectangle into up to 4 children.

    Requires 2**(levels-1) <= min(width, height) so every level refines.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if 2 ** (levels - 1) > min(width, height):
        raise ValueError(
            f"{levels} levels too deep for a {width}x{height} grid"
        )

    def rect_pixels(r0, r1, c0, c1):
        rows = np.arange(r0, r1, dtype=np.intp)
        cols = np.arange(c0, c1, dtype=np.intp)
        return (rows[:, None] * width + cols[None, :]).ravel()

    all_levels = []
    current = [Segment(0, 0, rect_pixels(0, height, 0, width), None, (0, height, 0, width))]
    all_levels.append(current)
    for li in range(1, levels):
        nxt = []
        for parent in current:
            r0, r1, c0, c1 = parent.rect
            for rr in _split_extent(r0, r1):
                for cc in _split_extent(c0, c1):
                    rect = (rr[0], rr[1], cc[0], cc[1])
                    nxt.append(
                        Segment(len(nxt), li, rect_pixels(*rect), parent.seg_id, rect)
                    )
        all_levels.append(nxt)
        current = nxt
    return SegmentationHierarchy(width, height, all_levels)


def segment_mean(values: np.ndarray, segment: Segment) -> np.ndarray:
    """Arithmetic mean of the value rows belonging to the segment's pixels."""
    if segment.size == 0:
        raise ValueError("empty segment")
    return np.asarray(values, dtype=np.float64)[segment.pixels].mean(axis=0)
