"""Score fields, the softmax link, cross-entropy risk and its gradient.

Everything in this module is a pure function over numpy arrays; the rest of
the package builds on these primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClassDistribution",
    "ScoreField",
    "StructuredInstance",
    "softmax",
    "cross_entropy_risk",
    "descent_direction",
    "mean_entropy",
    "entropy_rows",
]


@dataclass(frozen=True)
class ClassDistribution:
    """A probability distribution over the K classes of one pixel."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a 1-D vector")
        if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1 within 1e-9")
        object.__setattr__(self, "probs", p)


class ScoreField:
    """A J x K matrix of real-valued class scores, additively updated."""

    def __init__(self, scores: np.ndarray):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 2:
            raise ValueError("scores must be a J x K matrix")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        self.scores = scores

    @property
    def num_elements(self) -> int:
        return self.scores.shape[0]

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def constant(cls, num_elements: int, row: np.ndarray) -> "ScoreField":
        return cls(np.tile(np.asarray(row, dtype=np.float64), (num_elements, 1)))

    def copy(self) -> "ScoreField":
        return ScoreField(self.scores.copy())


@dataclass
class StructuredInstance:
    """One problem instance: pixel grid, hierarchy, labels and feature source.

    ``labels`` is a (J, K) array of per-pixel ground-truth class
    distributions (rows sum to 1; one-hot for synthetic scenes, but soft
    labels are accepted everywhere).  Pixels are indexed row-major,
    j = row * width + col.
    """

    width: int
    height: int
    labels: np.ndarray
    hierarchy: "object"  # SegmentationHierarchy; kept loose to avoid a cycle
    feature_source: "object" = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64)
        j = self.width * self.height
        if self.labels.shape[0] != j:
            raise ValueError(
                f"labels have {self.labels.shape[0]} rows, expected {j} pixels"
            )
        if np.any(self.labels < -1e-12):
            raise ValueError("label distributions must be nonnegative")
        if not np.allclose(self.labels.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("label distributions must sum to 1")
        if self.hierarchy is not None and self.hierarchy.num_pixels != j:
            raise ValueError("hierarchy does not cover the pixel grid")

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift for numerical stability.

    Accepts a single K-vector or a (J, K) matrix and returns probabilities
    of the same shape.
    """
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("softmax input must be finite")
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_dims(scores: np.ndarray, truth: np.ndarray):
    if scores.shape != truth.shape:
        raise ValueError(f"shape mismatch: scores {scores.shape} vs truth {truth.shape}")


def cross_entropy_risk(scores, truth) -> float:
    """Per-pixel cross-entropy risk -sum_j sum_k p_jk log q_jk (nats).

    ``scores`` is a ScoreField or (J, K) array; ``truth`` is the matching
    (J, K) array of ground-truth distributions.  Summed over pixels; callers
    that work on a corpus average over instances.
    """
    if isinstance(scores, ScoreField):
        scores = scores.scores
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_dims(scores, truth)
    # log q via shifted logsumexp; avoids computing q then log(q).
    shifted = scores - scores.max(axis=-1, keepdims=True)
    log_q = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return float(-(truth * log_q).sum())


def descent_direction(scores, truth) -> np.ndarray:
    """Negative gradient of the cross-entropy risk: p_j - q(scores)_j per pixel."""
    if isinstance(scores, ScoreField):
        scores = scores.scores
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_dims(scores, truth)
    return truth - softmax(scores)


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Entropy in nats of each probability row; 0*log(0) treated as 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def mean_entropy(scores, pixel_set) -> float:
    """Mean softmax entropy (nats) over the given pixel indices."""
    if isinstance(scores, ScoreField):
        scores = scores.scores
    idx = np.asarray(pixel_set, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("pixel set must be nonempty")
    q = softmax(np.asarray(scores, dtype=np.float64)[idx])
    return float(entropy_rows(q).mean())
