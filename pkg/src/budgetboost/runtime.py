"""Anytime budgeted inference: evaluate model stages under a cost budget.

The budget check is pre-stage: a stage's prospective cost (selection,
prediction, plus any unpaid feature charges its selected segments actually
need) is computed with a dry run, and the stage executes only if it fits.
Output after any number of completed stages is a valid score field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ScoreField, cross_entropy_risk, softmax
from .features import CostLedger, FeatureCache
from .selectors import select
from .boosting import AdditiveModel, shape_features, context_features

__all__ = ["InferenceProfile", "infer", "evaluate", "profile_corpus", "CostLedger"]


@dataclass
class InferenceProfile:
    """One checkpoint per completed stage: (cumulative cost, pixel accuracy,
    mean per-class recall, risk)."""

    checkpoints: list = field(default_factory=list)
    masks: list = field(default_factory=list)   # per-stage selected-pixel masks

    def add(self, cost: float, metrics: dict, risk: float):
        self.checkpoints.append(
            (cost, metrics["pixel_accuracy"], metrics["mean_class_recall"], risk)
        )


def _check_compatible(model: AdditiveModel, instance):
    if instance.num_classes != model.num_classes:
        raise ValueError("instance and model disagree on the number of classes")
    if instance.hierarchy.num_levels != model.hierarchy_levels:
        raise ValueError("instance hierarchy depth does not match the model")


def _stage_updates(model, stage, instance, scores, cache):
    """Dry-run one stage: selected segments, their tree outputs, and the
    (group, center) features their paths need.  Values are computed through
    the cache but nothing is charged."""
    segs = select(stage.selector, instance, scores)
    probs = softmax(scores)
    layout = model.layout
    updates = []
    needed = set()
    for seg in segs:
        static = np.empty(layout.vq_start)
        static[:layout.N_SHAPE] = shape_features(seg, instance.width, instance.height)
        static[layout.N_SHAPE:] = context_features(instance, probs, seg)

        def fetch(col, _seg=seg, _static=static):
            if col < layout.vq_start:
                return _static[col]
            gid, ci = layout.col_feature(col)
            return float(cache.code_field(gid, ci)[_seg.pixels].mean())

        value, touched = stage.tree.predict_lazy(fetch)
        for col in touched:
            feat = layout.col_feature(col)
            if feat is not None:
                needed.add(feat)
        updates.append((seg, value))
    return updates, needed


def _prospective_cost(model, stage, needed, ledger: CostLedger) -> float:
    cost = stage.selector.selector_cost + stage.tree.prediction_cost
    new_groups = {g for g, _ in needed} - ledger.paid_groups
    for gid in new_groups:
        cost += model.layout._group_by_id[gid].base_cost
    for gid, ci in needed:
        if (gid, ci) not in ledger.paid_centers:
            cost += model.layout._group_by_id[gid].per_center_cost
    return cost


def infer(model: AdditiveModel, instance, budget=None, record_masks: bool = False):
    """Evaluate model stages in order until the budget would be exceeded.

    ``budget`` is in cost units; None means unlimited.  Returns
    (ScoreField, CostLedger, InferenceProfile).
    """
    _check_compatible(model, instance)
    if budget is not None and budget < 0:
        raise ValueError("budget must be nonnegative")
    scores = np.tile(model.f0, (instance.num_pixels, 1))
    cache = FeatureCache(instance, model.groups)
    ledger = CostLedger()
    profile = InferenceProfile()

    for t, stage in enumerate(model.stages):
        updates, needed = _stage_updates(model, stage, instance, scores, cache)
        prospective = _prospective_cost(model, stage, needed, ledger)
        if budget is not None and ledger.total + prospective > budget:
            break
        ledger.begin_stage(t)
        ledger.add("selector", stage.selector.describe(), stage.selector.selector_cost)
        ledger.add("predictor", t, stage.tree.prediction_cost)
        for gid, ci in sorted(needed):
            ledger.charge_group(model.layout._group_by_id[gid])
            ledger.charge_center(model.layout._group_by_id[gid], ci)
        for seg, value in updates:
            scores[seg.pixels] += stage.alpha * value
        if record_masks:
            mask = np.zeros(instance.num_pixels, dtype=bool)
            for seg, _ in updates:
                mask[seg.pixels] = True
            profile.masks.append(mask)
        metrics = evaluate(scores, instance.labels)
        profile.add(ledger.total, metrics, cross_entropy_risk(scores, instance.labels))

    return ScoreField(scores), ledger, profile


def evaluate(scores, truth) -> dict:
    """Pixel accuracy and per-class recalls of argmax predictions.

    Classes absent from the truth are excluded from the mean class recall.
    """
    if isinstance(scores, ScoreField):
        scores = scores.scores
    scores = np.asarray(scores)
    truth = np.asarray(truth)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth shapes differ")
    pred = scores.argmax(axis=1)
    true = truth.argmax(axis=1)
    k = scores.shape[1]
    recalls = {}
    for c in range(k):
        mask = true == c
        if mask.any():
            recalls[c] = float((pred[mask] == c).mean())
    return {
        "pixel_accuracy": float((pred == true).mean()),
        "per_class_recall": recalls,
        "mean_class_recall": float(np.mean(list(recalls.values()))),
    }


def profile_corpus(model: AdditiveModel, instances, budget_grid) -> list:
    """Mean metrics over the corpus at each budget.

    ``budget_grid`` entries are cost units or None for unlimited.  Returns
    rows of {budget, pixel_acc, class_acc, risk}.
    """
    if not instances:
        raise ValueError("empty corpus")
    # One unlimited run per instance suffices: a budgeted run is exactly the
    # maximal stage prefix whose cumulative cost fits the budget, so each
    # budget's metrics equal the last checkpoint at or under that budget.
    curves = []
    for inst in instances:
        scores = np.tile(model.f0, (inst.num_pixels, 1))
        m0 = evaluate(scores, inst.labels)
        base = (0.0, m0["pixel_accuracy"], m0["mean_class_recall"],
                cross_entropy_risk(scores, inst.labels))
        _, _, profile = infer(model, inst, None)
        curves.append([base] + profile.checkpoints)
    rows = []
    for budget in budget_grid:
        accs, crecs, risks = [], [], []
        for curve in curves:
            point = curve[0]
            for cp in curve:
                if budget is not None and cp[0] > budget:
                    break
                point = cp
            accs.append(point[1])
            crecs.append(point[2])
            risks.append(point[3])
        rows.append({
            "budget": budget,
            "pixel_acc": float(np.mean(accs)),
            "class_acc": float(np.mean(crecs)),
            "risk": float(np.mean(risks)),
        })
    return rows
