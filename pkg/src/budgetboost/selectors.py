"""Structure selection: entropy-thresholded segments of the hierarchy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ScoreField, entropy_rows, softmax

__all__ = ["EntropySelector", "select", "enumerate_selectors", "segment_mean_entropies"]


@dataclass(frozen=True)
class EntropySelector:
    """Selects segments whose mean per-pixel prediction entropy exceeds
    ``threshold``.  ``level`` scopes one hierarchy level; None means
    all-levels mode with finest-wins overlap resolution."""

    threshold: float
    level: Optional[int] = None
    selector_cost: float = 1.0

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    def describe(self) -> str:
        scope = "all" if self.level is None else f"L{self.level}"
        return f"entropy[{scope}]>{self.threshold:g}"


def segment_mean_entropies(instance, scores) -> list:
    """Per-level arrays of mean per-pixel entropy for every segment."""
    if isinstance(scores, ScoreField):
        scores = scores.scores
    h = entropy_rows(softmax(scores))
    out = []
    for level_map, segs in zip(instance.hierarchy.level_maps, instance.hierarchy.levels):
        sums = np.bincount(level_map, weights=h, minlength=len(segs))
        counts = np.bincount(level_map, minlength=len(segs))
        out.append(sums / counts)
    return out


def select(selector: EntropySelector, instance, scores) -> list:
    """Segments with mean entropy above the threshold; pixel-disjoint.

    In all-levels mode a selected segment is dropped when any finer selected
    segment nests inside it, so each returned segment is the finest selected
    one for all of its pixels.
    """
    ent = segment_mean_entropies(instance, scores)
    hier = instance.hierarchy
    if selector.level is not None:
        if not (0 <= selector.level < hier.num_levels):
            raise ValueError(f"level {selector.level} out of range")
        segs = hier.segments_at(selector.level)
        return [s for s in segs if ent[selector.level][s.seg_id] > selector.threshold]

    picked = []  # finest-wins: walk fine -> coarse, track covered parents
    blocked = [set() for _ in range(hier.num_levels)]
    for li in range(hier.num_levels - 1, -1, -1):
        for s in hier.segments_at(li):
            sel = ent[li][s.seg_id] > selector.threshold
            if sel and s.seg_id not in blocked[li]:
                picked.append(s)
                sel_or_covered = True
            else:
                sel_or_covered = sel or s.seg_id in blocked[li]
            if sel_or_covered and li > 0:
                blocked[li - 1].add(s.parent)
    picked.reverse()
    return picked


def enumerate_selectors(hierarchy, threshold_grid, selector_cost: float = 1.0) -> list:
    """All (level, threshold) selectors plus the all-levels ones, in a
    fixed deterministic order."""
    grid = list(threshold_grid)
    if not grid:
        raise ValueError("threshold grid must be nonempty")
    sels = []
    for level in range(hierarchy.num_levels):
        for th in grid:
            sels.append(EntropySelector(threshold=th, level=level, selector_cost=selector_cost))
    for th in grid:
        sels.append(EntropySelector(threshold=th, level=None, selector_cost=selector_cost))
    return sels
