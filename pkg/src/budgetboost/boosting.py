"""Cost-greedy functional gradient boosting over structured outputs.

Training enumerates (selector, learner) candidates each iteration, fits a
vector regression tree to region-averaged descent directions, line-searches a
step size per candidate, and accepts the candidate with the best risk
improvement per unit cost.  Held-out (stacked) predictions feed the gradient
datasets; one auxiliary model per fold is maintained alongside the main one.

Internally scores are kept per finest-level segment ("cell") rather than per
pixel: every update is constant over a hierarchy segment, so the pixel-level
risk and entropies are exactly recoverable from cell scores and per-cell
ground-truth probability sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .core import ScoreField, entropy_rows, softmax
from .features import (DescriptorLayout, FeatureCache, build_dictionaries,
                       default_feature_groups)
from .hierarchy import Segment
from .selectors import EntropySelector, enumerate_selectors
from .trees import train_tree, tree_cost

__all__ = [
    "WeakStage",
    "AdditiveModel",
    "TrainConfig",
    "train",
    "stacked_predictions",
    "build_gradient_dataset",
    "line_search",
    "speedboost_select",
    "shape_features",
    "region_descriptor",
]


# ---------------------------------------------------------------------------
# model containers


@dataclass
class WeakStage:
    selector: EntropySelector
    tree: RegressionTree
    alpha: float
    cost: float  # c(h) at selection time: eps_S + eps_P + new feature costs


@dataclass
class AdditiveModel:
    num_classes: int
    f0: np.ndarray                  # (K,) initial scores
    stages: list
    groups: list                    # FeatureGroup with fitted dictionaries
    hierarchy_levels: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layout = DescriptorLayout(self.groups, self.num_classes)

    def prefix(self, num_stages: int) -> "AdditiveModel":
        m = AdditiveModel(self.num_classes, self.f0, self.stages[:num_stages],
                          self.groups, self.hierarchy_levels, dict(self.metadata))
        return m

    def feature_sets_after(self, num_stages: Optional[int] = None):
        """(paid groups, paid (group, center) pairs) accumulated in stage order."""
        stages = self.stages if num_stages is None else self.stages[:num_stages]
        groups, centers = set(), set()
        for st in stages:
            for gid, ci in st.tree.used_features:
                groups.add(gid)
                centers.add((gid, ci))
        return groups, centers


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 20
    thresholds: tuple = (0.1, 0.3, 0.5, 0.8, 1.2)
    depths: tuple = (0, 1, 2, 3, 4)
    lambda0: float = 0.01
    lambdas: Optional[tuple] = None       # default {0, lambda0, 10*lambda0}
    folds: int = 10
    selector_cost: float = 1.0
    prediction_cost: float = 1.0
    alpha_max: float = 10.0
    line_search_tol: float = 1e-4
    min_improvement: float = 1e-9
    dict_size: int = 16
    dict_samples_per_instance: int = 64
    kmeans_iters: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.folds < 2:
            raise ValueError("need at least 2 stacking folds")

    def learner_grid(self):
        lams = self.lambdas
        if lams is None:
            lams = (0.0, self.lambda0, 10.0 * self.lambda0)
        return [(d, l) for d in self.depths for l in lams]


# ---------------------------------------------------------------------------
# descriptors (generic per-pixel path, shared with the inference runtime)


def shape_features(segment: Segment, width: int, height: int) -> np.ndarray:
    """Zero-cost geometric features of a segment."""
    r0, r1, c0, c1 = segment.rect
    rows = segment.pixels // width
    cols = segment.pixels % width
    return np.array([
        segment.size / (width * height),
        (r1 - r0) / (c1 - c0),
        float(segment.level),
        rows.mean() / height,
        cols.mean() / width,
    ])


def context_features(instance, probs: np.ndarray, segment: Segment) -> np.ndarray:
    """Mean predicted class probabilities over the segment, its parent and
    its siblings (parent minus self); the root is its own context."""
    own_sum = probs[segment.pixels].sum(axis=0)
    own = own_sum / segment.size
    if segment.level == 0:
        parent_mean = own
        sibling = own
    else:
        parent = instance.hierarchy.segments_at(segment.level - 1)[segment.parent]
        par_sum = probs[parent.pixels].sum(axis=0)
        parent_mean = par_sum / parent.size
        rest = parent.size - segment.size
        sibling = (par_sum - own_sum) / rest if rest > 0 else own
    return np.concatenate([own, parent_mean, sibling])


def region_descriptor(instance, scores, segment: Segment, layout: DescriptorLayout,
                      cache: FeatureCache, ledger=None) -> np.ndarray:
    """Full descriptor row for one segment (computes every VQ column).

    Used on the training/test path; budgeted inference instead fetches VQ
    columns lazily during tree traversal.
    """
    if isinstance(scores, ScoreField):
        scores = scores.scores
    probs = softmax(scores)
    row = np.empty(layout.n_cols)
    row[:layout.N_SHAPE] = shape_features(segment, instance.width, instance.height)
    row[layout.N_SHAPE:layout.vq_start] = context_features(instance, probs, segment)
    from .features import pooled_code
    for c in range(layout.vq_start, layout.n_cols):
        gid, ci = layout.col_feature(c)
        row[c] = pooled_code(cache, segment, gid, ci, ledger)
    return row


def build_gradient_dataset(instances, score_fields, selector: EntropySelector,
                           layout: DescriptorLayout, groups) -> Optional[dict]:
    """Weighted regression dataset from the selector's chosen segments.

    One row per selected segment: full descriptor, target = mean descent
    direction over the segment's pixels, weight = segment size.  Returns
    None when the selector selects nothing anywhere ("inactive").
    """
    from .selectors import select
    xs, ys, ws, meta = [], [], [], []
    for inst, sf in zip(instances, score_fields):
        scores = sf.scores if isinstance(sf, ScoreField) else np.asarray(sf)
        cache = FeatureCache(inst, groups)
        grad = inst.labels - softmax(scores)
        for seg in select(selector, inst, scores):
            xs.append(region_descriptor(inst, scores, seg, layout, cache))
            ys.append(grad[seg.pixels].mean(axis=0))
            ws.append(float(seg.size))
            meta.append((inst, seg))
    if not xs:
        return None
    return {"X": np.array(xs), "Y": np.array(ys), "w": np.array(ws), "meta": meta}


# ---------------------------------------------------------------------------
# line search and candidate selection


def _golden_section(fn, lo: float, hi: float, tol: float) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def line_search(scores: np.ndarray, psums: np.ndarray, updates: np.ndarray,
                alpha_max: float = 10.0, tol: float = 1e-4):
    """Step size minimizing the cross-entropy risk of scores + alpha*updates.

    Rows aggregate pixels sharing a score row; ``psums`` holds the summed
    ground-truth probabilities of those pixels.  Returns (alpha, risk0,
    risk_at_alpha); alpha falls back to 0 when no improvement is found.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    psums = np.ascontiguousarray(psums, dtype=np.float64)
    updates = np.ascontiguousarray(updates, dtype=np.float64)
    risk0 = kernels.weighted_risk(scores, psums)
    if scores.shape[0] == 0:
        return 0.0, 0.0, 0.0
    alpha = _golden_section(
        lambda a: kernels.risk_at_alpha(scores, psums, updates, a), 0.0, alpha_max, tol
    )
    risk_a = kernels.risk_at_alpha(scores, psums, updates, alpha)
    if not risk_a < risk0:
        return 0.0, risk0, risk0
    return alpha, risk0, risk_a


def speedboost_select(candidates) -> int:
    """Index of the candidate maximizing improvement per unit cost.

    ``candidates`` is a sequence of (delta, cost) pairs with cost > 0.
    Ties break to the lower cost, then to enumeration order.
    """
    if not candidates:
        raise ValueError("no candidates")
    best = 0
    best_ratio = candidates[0][0] / candidates[0][1]
    for i in range(1, len(candidates)):
        d, c = candidates[i]
        r = d / c
        if r > best_ratio or (r == best_ratio and c < candidates[best][1]):
            best, best_ratio = i, r
    return best


# ---------------------------------------------------------------------------
# cell-aggregated corpus views (training fast path)


class _View:
    """Per-instance static structures for cell-level training."""

    def __init__(self, inst, groups, layout: DescriptorLayout):
        self.inst = inst
        hier = inst.hierarchy
        cells = hier.segments_at(hier.num_levels - 1)
        self.n_cells = len(cells)
        self.cell_pixels = [s.pixels for s in cells]
        self.cell_sizes = np.array([s.size for s in cells], dtype=np.float64)
        # ground-truth probability sums per cell
        self.P_cell = np.array([inst.labels[p].sum(axis=0) for p in self.cell_pixels])

        # global segment indexing, coarse -> fine
        self.level_slices = []
        segs = []
        off = 0
        for li in range(hier.num_levels):
            ls = hier.segments_at(li)
            self.level_slices.append((off, off + len(ls)))
            segs.extend(ls)
            off += len(ls)
        self.segments = segs
        self.n_seg = off

        cellmap = hier.level_maps[-1]
        self.A = np.zeros((self.n_seg, self.n_cells))
        for g, s in enumerate(segs):
            self.A[g, np.unique(cellmap[s.pixels])] = 1.0
        self.seg_sizes = self.A @ self.cell_sizes
        self.P_seg = self.A @ self.P_cell
        self.seg_cells = [np.nonzero(self.A[g])[0] for g in range(self.n_seg)]
        self.seg_level = np.array([s.level for s in segs])

        self.parent_glob = np.arange(self.n_seg)
        for g, s in enumerate(segs):
            if s.level > 0:
                self.parent_glob[g] = self.level_slices[s.level - 1][0] + s.parent

        self.shape_static = np.array(
            [shape_features(s, inst.width, inst.height) for s in segs]
        )

        # pooled VQ codes over each segment, all (group, center) columns
        self.layout = layout
        cache = FeatureCache(inst, groups)
        n_vq = layout.n_cols - layout.vq_start
        self.vq_static = np.empty((self.n_seg, n_vq))
        for c in range(layout.vq_start, layout.n_cols):
            gid, ci = layout.col_feature(c)
            codes = cache.code_field(gid, ci)
            col = np.empty(self.n_seg)
            for li in range(hier.num_levels):
                lo, hi = self.level_slices[li]
                sums = np.bincount(hier.level_maps[li], weights=codes, minlength=hi - lo)
                col[lo:hi] = sums / self.seg_sizes[lo:hi]
            self.vq_static[:, c - layout.vq_start] = col

    def init_scores(self, f0: np.ndarray) -> np.ndarray:
        return np.tile(f0, (self.n_cells, 1))

    def stats(self, cell_scores: np.ndarray) -> dict:
        """Entropies, descriptors and gradient targets for one score state."""
        q = softmax(cell_scores)
        wq = self.cell_sizes[:, None] * q
        seg_qsum = self.A @ wq                      # (n_seg, K)
        own = seg_qsum / self.seg_sizes[:, None]
        h_cells = entropy_rows(q)
        seg_h = (self.A @ (self.cell_sizes * h_cells)) / self.seg_sizes

        par = self.parent_glob
        parent_mean = own[par]
        rest = self.seg_sizes[par] - self.seg_sizes
        sib_sum = seg_qsum[par] - seg_qsum
        sibling = np.where(rest[:, None] > 0, sib_sum / np.where(rest == 0, 1.0, rest)[:, None], own)

        lay = self.layout
        D = np.empty((self.n_seg, lay.n_cols))
        D[:, :lay.N_SHAPE] = self.shape_static
        k = self.inst.num_classes
        D[:, lay.N_SHAPE:lay.N_SHAPE + k] = own
        D[:, lay.N_SHAPE + k:lay.N_SHAPE + 2 * k] = parent_mean
        D[:, lay.N_SHAPE + 2 * k:lay.vq_start] = sibling
        D[:, lay.vq_start:] = self.vq_static

        grad = (self.P_seg - seg_qsum) / self.seg_sizes[:, None]
        return {"q": q, "seg_h": seg_h, "D": D, "grad": grad}

    def selection_mask(self, selector: EntropySelector, seg_h: np.ndarray) -> np.ndarray:
        """Boolean mask over global segments; finest-wins in all-levels mode."""
        if selector.level is not None:
            lo, hi = self.level_slices[selector.level]
            kept = np.zeros(self.n_seg, dtype=bool)
            kept[lo:hi] = seg_h[lo:hi] > selector.threshold
            return kept
        selected = seg_h > selector.threshold
        kept = np.zeros(self.n_seg, dtype=bool)
        has_sel_desc = np.zeros(self.n_seg, dtype=bool)
        n_levels = len(self.level_slices)
        for li in range(n_levels - 1, -1, -1):
            lo, hi = self.level_slices[li]
            kept[lo:hi] = selected[lo:hi] & ~has_sel_desc[lo:hi]
            if li > 0:
                flag = selected[lo:hi] | has_sel_desc[lo:hi]
                np.logical_or.at(has_sel_desc, self.parent_glob[lo:hi][flag], True)
        return kept

    def gather_cells(self, kept: np.ndarray):
        """(cell indices, owning kept-row position) for kept segments."""
        rows = np.nonzero(kept)[0]
        if rows.size == 0:
            return rows, np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
        groups = [self.seg_cells[g] for g in rows]
        cells = np.concatenate(groups)
        pos = np.repeat(np.arange(rows.size), [g.size for g in groups])
        return rows, cells, pos

    def expand_to_pixels(self, cell_scores: np.ndarray) -> np.ndarray:
        out = np.empty((self.inst.num_pixels, cell_scores.shape[1]))
        for c, pix in enumerate(self.cell_pixels):
            out[pix] = cell_scores[c]
        return out


# ---------------------------------------------------------------------------
# training loop


class _TrainState:
    """Everything mutable during training; exposed to tests via metadata."""

    def __init__(self):
        self.held_out_fields = None
        self.provenance = []
        self.candidate_log = []


def _initial_scores(instances) -> np.ndarray:
    counts = np.zeros(instances[0].num_classes)
    for inst in instances:
        counts += inst.labels.sum(axis=0)
    # +1 smoothing keeps f0 finite when a class never occurs
    return np.log((counts + 1.0) / (counts.sum() + counts.size))


def _corpus_risk(scoresets, views) -> float:
    total = 0.0
    for sc, v in zip(scoresets, views):
        total += kernels.weighted_risk(np.ascontiguousarray(sc), v.P_cell)
    return total / len(views)


def train(instances, config: TrainConfig, groups=None, record_candidates: bool = False,
          record_provenance: bool = False) -> AdditiveModel:
    """Run the full cost-greedy boosting loop and return the main model."""
    model, _ = train_with_state(instances, config, groups,
                                record_candidates=record_candidates,
                                record_provenance=record_provenance)
    return model


def stacked_predictions(instances, config: TrainConfig, groups=None):
    """Held-out score fields: each instance's scores come from the auxiliary
    model trained without that instance's fold.  Returns (score fields,
    provenance rows (instance index, instance fold, producer excluded fold))."""
    _, state = train_with_state(instances, config, groups, record_provenance=True)
    return state.held_out_fields, state.provenance


def train_with_state(instances, config: TrainConfig, groups=None,
                     record_candidates: bool = False, record_provenance: bool = False):
    n = len(instances)
    if n < config.folds:
        raise ValueError(f"{n} instances but {config.folds} stacking folds")
    k = instances[0].num_classes
    n_levels = instances[0].hierarchy.num_levels
    for inst in instances:
        if inst.num_classes != k or inst.hierarchy.num_levels != n_levels:
            raise ValueError("instances disagree on classes or hierarchy depth")

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    fold = np.empty(n, dtype=int)
    fold[perm] = np.arange(n) % config.folds

    if groups is None:
        groups = default_feature_groups(k)
    build_dictionaries(groups, instances, dict_size=config.dict_size,
                       seed=int(rng.integers(2**32)),
                       samples_per_instance=config.dict_samples_per_instance,
                       kmeans_iters=config.kmeans_iters)
    layout = DescriptorLayout(groups, k)

    views = [_View(inst, groups, layout) for inst in instances]
    f0 = _initial_scores(instances)
    main = [v.init_scores(f0) for v in views]
    aux = [[v.init_scores(f0) for v in views] for _ in range(config.folds)]

    selectors = enumerate_selectors(instances[0].hierarchy, config.thresholds,
                                    config.selector_cost)
    learners = config.learner_grid()
    paid_groups, paid_centers = set(), set()
    stages = []
    log_rows = []
    risk_trail = []
    state = _TrainState()
    termination = "completed"

    risk_prev = _corpus_risk(main, views)
    risk_trail.append(risk_prev)

    for t in range(config.iterations):
        ho_producer = [int(fold[i]) for i in range(n)]
        ho_stats = [views[i].stats(aux[ho_producer[i]][i]) for i in range(n)]
        main_stats = [views[i].stats(main[i]) for i in range(n)]

        # --- candidate generation -----------------------------------------
        candidates = []
        for si, sel in enumerate(selectors):
            kept_ho = [views[i].selection_mask(sel, ho_stats[i]["seg_h"]) for i in range(n)]
            rows_per_inst = [np.nonzero(m)[0] for m in kept_ho]
            if sum(r.size for r in rows_per_inst) == 0:
                continue  # inactive selector this iteration
            X = np.concatenate([ho_stats[i]["D"][r] for i, r in enumerate(rows_per_inst)])
            Y = np.concatenate([ho_stats[i]["grad"][r] for i, r in enumerate(rows_per_inst)])
            w = np.concatenate([views[i].seg_sizes[r] for i, r in enumerate(rows_per_inst)])
            X = np.ascontiguousarray(X)
            presorted = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
            # line-search arrays follow the main model's own selections
            kept_main = [views[i].selection_mask(sel, main_stats[i]["seg_h"]) for i in range(n)]
            gathered = [views[i].gather_cells(kept_main[i]) for i in range(n)]
            ys = np.concatenate([main[i][g[1]] for i, g in enumerate(gathered)]) \
                if n else np.empty((0, k))
            ps = np.concatenate([views[i].P_cell[g[1]] for i, g in enumerate(gathered)])

            for depth, lam in learners:
                tree = train_tree(X, Y, w, depth, lam, layout, paid_groups,
                                  paid_centers, config.prediction_cost, presorted)
                cost = sel.selector_cost + tree_cost(tree, layout, paid_groups, paid_centers)
                if ys.shape[0]:
                    us = np.concatenate([
                        tree.predict(main_stats[i]["D"][g[0]])[g[2]]
                        if g[0].size else np.empty((0, k))
                        for i, g in enumerate(gathered)
                    ])
                    alpha, r0, ra = line_search(ys, ps, us, config.alpha_max,
                                                config.line_search_tol)
                    delta = (r0 - ra) / n
                else:
                    alpha, delta = 0.0, 0.0
                candidates.append({
                    "selector_index": si, "depth": depth, "lam": lam, "tree": tree,
                    "alpha": alpha, "delta": delta, "cost": cost,
                    "ds_instance_rows": rows_per_inst,
                    "X": X, "Y": Y, "w": w,
                })

        if not candidates:
            termination = "no active selectors"
            break
        best = speedboost_select([(c["delta"], c["cost"]) for c in candidates])
        win = candidates[best]
        if record_candidates:
            state.candidate_log.append({
                "iteration": t,
                "candidates": [(c["delta"], c["cost"]) for c in candidates],
                "chosen": best,
            })
        if win["delta"] <= config.min_improvement:
            termination = "no improving candidate"
            break

        sel = selectors[win["selector_index"]]
        if record_provenance:
            for i, r in enumerate(win["ds_instance_rows"]):
                for _ in range(r.size):
                    state.provenance.append((i, int(fold[i]), ho_producer[i]))

        # --- accept: apply to the main model --------------------------------
        for i in range(n):
            kept = views[i].selection_mask(sel, main_stats[i]["seg_h"])
            rows, cells, pos = views[i].gather_cells(kept)
            if rows.size:
                u = win["tree"].predict(main_stats[i]["D"][rows])
                main[i][cells] += win["alpha"] * u[pos]
        for gid, ci in win["tree"].used_features:
            paid_groups.add(gid)
            paid_centers.add((gid, ci))
        stages.append(WeakStage(sel, win["tree"], win["alpha"], win["cost"]))

        risk_now = _corpus_risk(main, views)
        risk_trail.append(risk_now)
        log_rows.append({
            "iteration": t, "selector": sel.describe(),
            "level": sel.level, "threshold": sel.threshold,
            "depth": win["depth"], "lam": win["lam"], "alpha": win["alpha"],
            "delta_risk": win["delta"], "stage_cost": win["cost"],
            "ratio": win["delta"] / win["cost"], "risk": risk_now,
        })
        risk_prev = risk_now

        # --- stacked auxiliary refits (reuse the winning selector/learner) --
        mask_rows = win["ds_instance_rows"]
        for j in range(config.folds):
            keep = np.concatenate([
                np.full(mask_rows[i].size, fold[i] != j) for i in range(n)
            ]) if n else np.empty(0, dtype=bool)
            if not keep.any():
                continue
            Xj, Yj, wj = win["X"][keep], win["Y"][keep], win["w"][keep]
            tree_j = train_tree(Xj, Yj, wj, win["depth"], win["lam"], layout,
                                paid_groups, paid_centers, config.prediction_cost)
            aux_stats = [views[i].stats(aux[j][i]) for i in range(n)]
            kept_j = [views[i].selection_mask(sel, aux_stats[i]["seg_h"]) for i in range(n)]
            gath = [views[i].gather_cells(kept_j[i]) for i in range(n)]
            train_ids = [i for i in range(n) if fold[i] != j]
            ys = np.concatenate([aux[j][i][gath[i][1]] for i in train_ids])
            ps = np.concatenate([views[i].P_cell[gath[i][1]] for i in train_ids])
            us_by_inst = {
                i: (tree_j.predict(aux_stats[i]["D"][gath[i][0]])
                    if gath[i][0].size else np.empty((0, k)))
                for i in range(n)
            }
            us = np.concatenate([us_by_inst[i][gath[i][2]] for i in train_ids])
            alpha_j, _, _ = line_search(ys, ps, us, config.alpha_max,
                                        config.line_search_tol)
            for i in range(n):
                rows, cells, pos = gath[i]
                if rows.size:
                    aux[j][i][cells] += alpha_j * us_by_inst[i][pos]

    # expose held-out fields for stacking tests / diagnostics
    state.held_out_fields = [
        ScoreField(views[i].expand_to_pixels(aux[fold[i]][i])) for i in range(n)
    ]

    model = AdditiveModel(
        num_classes=k, f0=f0, stages=stages, groups=groups,
        hierarchy_levels=n_levels,
        metadata={
            "seed": config.seed,
            "iterations_requested": config.iterations,
            "termination": termination,
            "risk_trail": risk_trail,
            "log": log_rows,
            "fold_assignment": fold.tolist(),
        },
    )
    if record_candidates:
        model.metadata["candidate_log"] = state.candidate_log
    return model, state
