"""Canonical serialization of instances and models."""

import json

import numpy as np
import pytest

from budgetboost.boosting import TrainConfig, train
from budgetboost.core import StructuredInstance
from budgetboost.hierarchy import Segment, SegmentationHierarchy
from budgetboost.io import (dumps_canonical, instance_from_dict,
                            instance_to_dict, load_instance, load_model,
                            model_from_dict, model_to_dict, save_instance,
                            save_model)
from budgetboost.runtime import infer
from budgetboost.scenes import ArrayFeatureSource
from tests.conftest import random_instance, small_scene


class TestCanonicalJSON:
    def test_sorted_and_compact(self):
        s = dumps_canonical({"b": 1, "a": [1, 2]})
        assert s == '{"a":[1,2],"b":1}\n'

    def test_stable_across_dict_order(self):
        assert dumps_canonical({"x": 1, "y": 2}) == dumps_canonical({"y": 2, "x": 1})


class TestInstanceRoundTrip:
    def test_synthetic_scene_round_trip(self, tmp_path):
        inst = small_scene(7)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        loaded = load_instance(path)
        assert np.array_equal(loaded.labels, inst.labels)
        assert loaded.width == inst.width
        assert loaded.hierarchy.num_levels == inst.hierarchy.num_levels
        # feature source reproduces identical fields
        from tests.conftest import tiny_groups
        g = tiny_groups(np.random.default_rng(0))[0]
        assert np.array_equal(inst.feature_source.base_field(g),
                              loaded.feature_source.base_field(g))

    def test_serialization_is_byte_stable(self, tmp_path):
        inst = small_scene(7)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_instance(inst, a)
        save_instance(load_instance(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_soft_labels_round_trip(self, rng, tmp_path):
        inst = random_instance(rng)  # soft (non-one-hot) labels
        path = tmp_path / "soft.json"
        save_instance(inst, path)
        assert np.allclose(load_instance(path).labels, inst.labels)

    def test_explicit_hierarchy_and_array_features(self, tmp_path, rng):
        # a non-quadtree hierarchy must survive via explicit segment lists
        levels = [
            [Segment(0, 0, np.arange(16), None, (0, 4, 0, 4))],
            [Segment(0, 1, np.arange(6), 0, (0, 2, 0, 4)),
             Segment(1, 1, np.arange(6, 16), 0, (1, 4, 0, 4))],
        ]
        h = SegmentationHierarchy(4, 4, levels)
        labels = np.eye(2)[rng.integers(0, 2, size=16)]
        inst = StructuredInstance(width=4, height=4, labels=labels, hierarchy=h,
                                  feature_source=ArrayFeatureSource(
                                      {"g0": rng.standard_normal((16, 3))}))
        path = tmp_path / "x.json"
        save_instance(inst, path)
        loaded = load_instance(path)
        assert json.loads(path.read_text())["hierarchy"]["kind"] == "explicit"
        assert np.array_equal(loaded.hierarchy.levels[1][0].pixels, np.arange(6))
        assert np.array_equal(loaded.feature_source.arrays["g0"],
                              inst.feature_source.arrays["g0"])

    def test_bad_format_rejected(self):
        with pytest.raises(ValueError):
            instance_from_dict({"format": "something-else"})
        d = instance_to_dict(small_scene(1))
        d["version"] = 99
        with pytest.raises(ValueError):
            instance_from_dict(d)


@pytest.fixture(scope="module")
def model():
    corpus = [small_scene(500 + i) for i in range(4)]
    cfg = TrainConfig(iterations=3, thresholds=(0.3, 0.8), depths=(0, 1, 2),
                      folds=2, dict_size=4, dict_samples_per_instance=16)
    return train(corpus, cfg), corpus


class TestModelRoundTrip:
    def test_round_trip_preserves_inference(self, model, tmp_path):
        m, corpus = model
        path = tmp_path / "model.json"
        save_model(m, path)
        loaded = load_model(path)
        for inst in corpus[:2]:
            a, la, _ = infer(m, inst)
            b, lb, _ = infer(loaded, inst)
            assert np.array_equal(a.scores, b.scores)
            assert la.total == lb.total

    def test_byte_stable(self, model, tmp_path):
        m, _ = model
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_model(m, a)
        save_model(load_model(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_metadata_preserved(self, model, tmp_path):
        m, _ = model
        d = model_to_dict(m)
        loaded = model_from_dict(d)
        assert loaded.metadata["seed"] == m.metadata["seed"]
        assert loaded.metadata["risk_trail"] == pytest.approx(
            m.metadata["risk_trail"])

    def test_bad_format_rejected(self, model):
        m, _ = model
        d = model_to_dict(m)
        d["format"] = "nope"
        with pytest.raises(ValueError):
            model_from_dict(d)
