"""Shared helpers: small random instances and feature groups for tests."""

import numpy as np
import pytest

from budgetboost.core import StructuredInstance
from budgetboost.features import FeatureGroup
from budgetboost.hierarchy import build_quadtree_hierarchy
from budgetboost.scenes import SyntheticSceneConfig, generate_scene


def random_soft_labels(rng, num_pixels, num_classes):
    raw = rng.random((num_pixels, num_classes)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


def random_instance(rng, width=16, height=16, num_classes=3, levels=3,
                    one_hot=False):
    """Instance with random labels, a quadtree hierarchy, and a synthetic
    feature source."""
    from budgetboost.scenes import SyntheticFeatureSource
    j = width * height
    if one_hot:
        labels = np.zeros((j, num_classes))
        labels[np.arange(j), rng.integers(0, num_classes, size=j)] = 1.0
    else:
        labels = random_soft_labels(rng, j, num_classes)
    return StructuredInstance(
        width=width, height=height, labels=labels,
        hierarchy=build_quadtree_hierarchy(width, height, levels),
        feature_source=SyntheticFeatureSource(labels, 0.2, int(rng.integers(2**31))),
    )


def small_scene(seed, **overrides):
    params = dict(width=16, height=16, num_classes=3, num_shapes=2,
                  noise_level=0.2, hierarchy_levels=3, rng_seed=seed)
    params.update(overrides)
    return generate_scene(SyntheticSceneConfig(**params))


def tiny_groups(rng, num_classes=3, num_groups=2, centers=3):
    """Feature groups with explicit random dictionaries and mixed costs."""
    groups = []
    for g in range(num_groups):
        dim = 4 + g
        groups.append(FeatureGroup(
            group_id=f"g{g}", base_dim=dim, base_cost=10.0 * (g + 1),
            per_center_cost=0.5 * (g + 1), latent_dim=num_classes,
            map_seed=100 + g,
            centers=rng.standard_normal((centers, dim)),
        ))
    return groups


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary: one pass/fail line per criterion -------------------

_ACCEPTANCE_RESULTS = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and "criterion" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        if report.when == "call":
            _ACCEPTANCE_RESULTS[name] = report.outcome
        elif report.when == "setup" and report.outcome != "passed":
            _ACCEPTANCE_RESULTS[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name in sorted(_ACCEPTANCE_RESULTS,
                       key=lambda n: int(n.split("_")[2])):
        outcome = _ACCEPTANCE_RESULTS[name]
        label = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"  [{label}] {name}")
