"""Versioned structured-text (JSON) serialization for instances and models.

Serialization is canonical (sorted keys, fixed separators) so reruns with
the same seed produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .boosting import AdditiveModel, WeakStage
from .core import StructuredInstance
from .features import FeatureGroup
from .hierarchy import Segment, SegmentationHierarchy, build_quadtree_hierarchy
from .scenes import ArrayFeatureSource, SyntheticFeatureSource
from .selectors import EntropySelector
from .trees import RegressionTree

__all__ = ["save_instance", "load_instance", "save_model", "load_model",
           "dumps_canonical", "instance_to_dict", "instance_from_dict",
           "model_to_dict", "model_from_dict"]

INSTANCE_FORMAT = "budgetboost-instance"
MODEL_FORMAT = "budgetboost-model"
VERSION = 1


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _labels_to_dict(labels: np.ndarray) -> dict:
    argmax = labels.argmax(axis=1)
    onehot = np.zeros_like(labels)
    onehot[np.arange(labels.shape[0]), argmax] = 1.0
    if np.array_equal(onehot, labels):
        return {"kind": "argmax", "classes": int(labels.shape[1]),
                "map": argmax.astype(int).tolist()}
    return {"kind": "soft", "probs": labels.tolist()}


def _labels_from_dict(d: dict) -> np.ndarray:
    if d["kind"] == "argmax":
        flat = np.asarray(d["map"], dtype=int)
        labels = np.zeros((flat.size, d["classes"]))
        labels[np.arange(flat.size), flat] = 1.0
        return labels
    return np.asarray(d["probs"], dtype=np.float64)


def _jsonify(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON types."""
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_jsonify(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    return obj


def _hierarchy_to_dict(h: SegmentationHierarchy) -> dict:
    if _is_quadtree(h):
        return {"kind": "quadtree", "levels": h.num_levels}
    return {
        "kind": "explicit",
        "levels": [
            [{"id": s.seg_id, "parent": s.parent, "rect": list(s.rect),
              "pixels": s.pixels.astype(int).tolist()} for s in level]
            for level in h.levels
        ],
    }


def _is_quadtree(h: SegmentationHierarchy) -> bool:
    try:
        ref = build_quadtree_hierarchy(h.width, h.height, h.num_levels)
    except ValueError:
        return False
    if any(len(a) != len(b) for a, b in zip(ref.levels, h.levels)):
        return False
    for la, lb in zip(ref.levels, h.levels):
        for sa, sb in zip(la, lb):
            if sa.rect != sb.rect or sa.parent != sb.parent:
                return False
    return True


def _hierarchy_from_dict(d: dict, width: int, height: int) -> SegmentationHierarchy:
    if d["kind"] == "quadtree":
        return build_quadtree_hierarchy(width, height, d["levels"])
    levels = []
    for li, level in enumerate(d["levels"]):
        levels.append([
            Segment(s["id"], li, np.asarray(s["pixels"], dtype=np.intp),
                    s["parent"], tuple(s["rect"]))
            for s in level
        ])
    return SegmentationHierarchy(width, height, levels)


def _source_to_dict(src) -> dict:
    if isinstance(src, SyntheticFeatureSource):
        return {"kind": "synthetic", "seed": src.seed, "noise_level": src.noise_level}
    if isinstance(src, ArrayFeatureSource):
        return {"kind": "arrays",
                "arrays": {k: v.tolist() for k, v in sorted(src.arrays.items())}}
    raise TypeError(f"cannot serialize feature source {type(src).__name__}")


def instance_to_dict(inst: StructuredInstance) -> dict:
    return {
        "format": INSTANCE_FORMAT,
        "version": VERSION,
        "width": inst.width,
        "height": inst.height,
        "labels": _labels_to_dict(inst.labels),
        "hierarchy": _hierarchy_to_dict(inst.hierarchy),
        "features": _source_to_dict(inst.feature_source),
    }


def instance_from_dict(d: dict) -> StructuredInstance:
    if d.get("format") != INSTANCE_FORMAT:
        raise ValueError("not a budgetboost instance file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported instance version {d.get('version')}")
    labels = _labels_from_dict(d["labels"])
    hierarchy = _hierarchy_from_dict(d["hierarchy"], d["width"], d["height"])
    fd = d["features"]
    if fd["kind"] == "synthetic":
        source = SyntheticFeatureSource(labels, fd["noise_level"], fd["seed"])
    else:
        source = ArrayFeatureSource(fd["arrays"])
    return StructuredInstance(width=d["width"], height=d["height"], labels=labels,
                              hierarchy=hierarchy, feature_source=source)


def save_instance(inst: StructuredInstance, path) -> None:
    Path(path).write_text(dumps_canonical(instance_to_dict(inst)))


def load_instance(path) -> StructuredInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def _group_to_dict(g: FeatureGroup) -> dict:
    return {
        "group_id": g.group_id,
        "base_dim": g.base_dim,
        "base_cost": g.base_cost,
        "per_center_cost": g.per_center_cost,
        "latent_dim": g.latent_dim,
        "map_seed": g.map_seed,
        "centers": None if g.centers is None else g.centers.tolist(),
    }


def _group_from_dict(d: dict) -> FeatureGroup:
    return FeatureGroup(
        group_id=d["group_id"], base_dim=d["base_dim"], base_cost=d["base_cost"],
        per_center_cost=d["per_center_cost"], latent_dim=d["latent_dim"],
        map_seed=d["map_seed"],
        centers=None if d["centers"] is None else np.asarray(d["centers"]),
    )


def model_to_dict(model: AdditiveModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": VERSION,
        "num_classes": model.num_classes,
        "hierarchy_levels": model.hierarchy_levels,
        "f0": [float(x) for x in model.f0],
        "groups": [_group_to_dict(g) for g in model.groups],
        "stages": [
            {
                "selector": {"threshold": s.selector.threshold,
                             "level": s.selector.level,
                             "selector_cost": s.selector.selector_cost},
                "tree": s.tree.to_dict(),
                "alpha": float(s.alpha),
                "cost": float(s.cost),
            }
            for s in model.stages
        ],
        "metadata": _jsonify(model.metadata),
    }


def model_from_dict(d: dict) -> AdditiveModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a budgetboost model file")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    stages = [
        WeakStage(
            selector=EntropySelector(threshold=s["selector"]["threshold"],
                                     level=s["selector"]["level"],
                                     selector_cost=s["selector"]["selector_cost"]),
            tree=RegressionTree.from_dict(s["tree"]),
            alpha=s["alpha"],
            cost=s["cost"],
        )
        for s in d["stages"]
    ]
    return AdditiveModel(
        num_classes=d["num_classes"],
        f0=np.asarray(d["f0"], dtype=np.float64),
        stages=stages,
        groups=[_group_from_dict(g) for g in d["groups"]],
        hierarchy_levels=d["hierarchy_levels"],
        metadata=d["metadata"],
    )


def save_model(model: AdditiveModel, path) -> None:
    Path(path).write_text(dumps_canonical(model_to_dict(model)))


def load_model(path) -> AdditiveModel:
    return model_from_dict(json.loads(Path(path).read_text()))
