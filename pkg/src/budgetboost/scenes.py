"""Synthetic scene generator: shape-composited label maps at desk scale."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .core import StructuredInstance
from .hierarchy import build_quadtree_hierarchy

__all__ = ["SyntheticSceneConfig", "SyntheticFeatureSource", "ArrayFeatureSource", "generate_scene"]


@dataclass(frozen=True)
class SyntheticSceneConfig:
    width: int = 64
    height: int = 64
    num_classes: int = 5
    num_shapes: int = 4
    noise_level: float = 0.2
    hierarchy_levels: int = 4
    rng_seed: int = 0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("grid must be at least 8x8")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.hierarchy_levels < 2:
            raise ValueError("need at least 2 hierarchy levels")
        if not (0.0 <= self.noise_level < 1.0):
            raise ValueError("noise_level must be in [0, 1)")


def _group_stream(instance_seed: int, group_id: str) -> np.random.Generator:
    return np.random.default_rng([instance_seed, zlib.crc32(group_id.encode())])


class SyntheticFeatureSource:
    """Lazily computable base descriptors derived from the label map.

    The per-pixel latent vector is the ground-truth distribution blended
    with uniform noise; each feature group sees it through the group's own
    fixed linear map, with group-specific noise draws.
    """

    kind = "synthetic"

    def __init__(self, labels: np.ndarray, noise_level: float, seed: int):
        self.labels = np.asarray(labels, dtype=np.float64)
        self.noise_level = float(noise_level)
        self.seed = int(seed)

    def base_field(self, group) -> np.ndarray:
        rng = _group_stream(self.seed, group.group_id)
        noise = rng.random(self.labels.shape)
        latent = (1.0 - self.noise_level) * self.labels + self.noise_level * noise
        return latent @ group.linear_map().T


class ArrayFeatureSource:
    """Explicit per-group base descriptor arrays (ingested external data)."""

    kind = "arrays"

    def __init__(self, arrays: dict):
        self.arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    def base_field(self, group) -> np.ndarray:
        try:
            return self.arrays[group.group_id]
        except KeyError:
            raise KeyError(f"no base array for feature group {group.group_id!r}")


def _paint_shape(label_map: np.ndarray, rng: np.random.Generator, num_classes: int,
                 background: int):
    h, w = label_map.shape
    cls = int(rng.integers(0, num_classes - 1))
    if cls >= background:
        cls += 1  # shapes never repaint the background class
    # shape sides span a quarter to ~5/8 of the short grid side: large enough
    # to keep the background from dominating, few enough boundary pixels to
    # leave most regions single-class
    m = min(h, w)
    lo = max(5, m // 4)
    hi = max(lo, (5 * m) // 8)
    sh = int(rng.integers(lo, hi + 1))
    sw = int(rng.integers(lo, hi + 1))
    r0 = int(rng.integers(0, h - sh + 1))
    c0 = int(rng.integers(0, w - sw + 1))
    if rng.random() < 0.5:
        label_map[r0:r0 + sh, c0:c0 + sw] = cls
    else:
        rr = np.arange(h)[:, None]
        cc = np.arange(w)[None, :]
        cy, cx = r0 + sh / 2.0, c0 + sw / 2.0
        mask = ((rr - cy) / (sh / 2.0)) ** 2 + ((cc - cx) / (sw / 2.0)) ** 2 <= 1.0
        label_map[mask] = cls


def generate_scene(config: SyntheticSceneConfig) -> StructuredInstance:
    """Deterministic scene: random shapes composited over a background class."""
    rng = np.random.default_rng(config.rng_seed)
    background = int(rng.integers(0, config.num_classes))
    label_map = np.full((config.height, config.width), background, dtype=np.int64)
    for _ in range(config.num_shapes):
        _paint_shape(label_map, rng, config.num_classes, background)

    flat = label_map.ravel()
    labels = np.zeros((flat.size, config.num_classes), dtype=np.float64)
    labels[np.arange(flat.size), flat] = 1.0

    hierarchy = build_quadtree_hierarchy(config.width, config.height, config.hierarchy_levels)
    feature_seed = int(rng.integers(0, 2**32))
    source = SyntheticFeatureSource(labels, config.noise_level, feature_seed)
    return StructuredInstance(
        width=config.width,
        height=config.height,
        labels=labels,
        hierarchy=hierarchy,
        feature_source=source,
        meta={"config": config, "background": background, "feature_seed": feature_seed},
    )
