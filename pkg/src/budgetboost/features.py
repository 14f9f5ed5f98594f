"""Feature groups: base per-pixel descriptors, soft-VQ codes, region pooling,
and exact cost accounting for lazily computed features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "FeatureGroup",
    "FeatureCache",
    "CostLedger",
    "soft_vq_code",
    "pooled_code",
    "charge",
    "lloyd_kmeans",
    "build_dictionaries",
    "default_feature_groups",
]


@dataclass
class FeatureGroup:
    """A group of features sharing one base per-pixel descriptor.

    Touching any feature of the group first pays ``base_cost``; each
    individual (group, center) code additionally pays ``per_center_cost``
    once per inference.
    """

    group_id: str
    base_dim: int
    base_cost: float
    per_center_cost: float
    latent_dim: int = 0           # input dim of the synthetic linear map (K)
    map_seed: int = 0
    centers: Optional[np.ndarray] = None  # (k, base_dim)
    _map: Optional[np.ndarray] = None
    _stats: Optional[tuple] = None

    def __post_init__(self):
        if self.base_cost < 0 or self.per_center_cost < 0:
            raise ValueError("costs must be nonnegative")
        if self.centers is not None:
            self.centers = np.asarray(self.centers, dtype=np.float64)

    @property
    def num_centers(self) -> int:
        return 0 if self.centers is None else self.centers.shape[0]

    def linear_map(self) -> np.ndarray:
        if self._map is None:
            rng = np.random.default_rng(self.map_seed)
            self._map = rng.standard_normal((self.base_dim, self.latent_dim))
        return self._map

    def dictionary_stats(self):
        """(E_j[||mu_j||^2], E_j[mu_j]) over the dictionary, cached."""
        if self.centers is None or self.centers.shape[0] == 0:
            raise ValueError(f"group {self.group_id!r} has no dictionary")
        if self._stats is None:
            sq = (self.centers ** 2).sum(axis=1)
            self._stats = (float(sq.mean()), self.centers.mean(axis=0), sq)
        return self._stats


def soft_vq_code(v: np.ndarray, group: FeatureGroup, center_index: int):
    """Soft assignment code max(0, mean_j d_j(v) - d_i(v)) via the expanded
    identity that never touches the other centers' distances.

    ``v`` may be a single descriptor or a (J, base_dim) field; the return
    matches (scalar or (J,) vector).
    """
    mean_sq, mean_mu, sq = group.dictionary_stats()
    if not (0 <= center_index < group.num_centers):
        raise IndexError(f"center index {center_index} out of range")
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    vv = v[None, :] if single else v
    mu = group.centers[center_index]
    z = mean_sq - 2.0 * (vv @ mean_mu) - (sq[center_index] - 2.0 * (vv @ mu))
    code = np.maximum(0.0, z)
    return float(code[0]) if single else code


class CostLedger:
    """Exact record of selection, prediction and feature costs incurred
    during one inference.  Groups and (group, center) codes are each
    charged at most once."""

    def __init__(self):
        self.paid_groups = set()
        self.paid_centers = set()
        self.entries = []
        self.total = 0.0
        self._stage = None

    def begin_stage(self, stage_index: int):
        self._stage = stage_index

    def add(self, kind: str, ref, amount: float):
        self.entries.append(
            {"stage": self._stage, "kind": kind, "ref": ref, "amount": float(amount)}
        )
        self.total += float(amount)

    def charge_group(self, group: FeatureGroup) -> float:
        if group.group_id in self.paid_groups:
            return 0.0
        self.paid_groups.add(group.group_id)
        self.add("group", group.group_id, group.base_cost)
        return group.base_cost

    def charge_center(self, group: FeatureGroup, center_index: int) -> float:
        key = (group.group_id, int(center_index))
        if key in self.paid_centers:
            return 0.0
        self.paid_centers.add(key)
        self.add("center", key, group.per_center_cost)
        return group.per_center_cost


def charge(ledger: CostLedger, group: FeatureGroup, center_index: Optional[int] = None) -> float:
    """Charge the ledger for touching a group (and optionally one of its
    centers); returns the cost delta, 0 when already paid."""
    delta = ledger.charge_group(group)
    if center_index is not None:
        delta += ledger.charge_center(group, center_index)
    return delta


class FeatureCache:
    """Per-inference lazy store of base fields and per-center code fields.

    Computation and charging are decoupled: a value may be computed during a
    budget dry-run and only charged when a stage actually executes.
    """

    def __init__(self, instance, groups):
        self.instance = instance
        self.groups = {g.group_id: g for g in groups}
        self._base = {}
        self._codes = {}

    def group(self, group_id: str) -> FeatureGroup:
        return self.groups[group_id]

    def base_field(self, group_id: str) -> np.ndarray:
        if group_id not in self._base:
            g = self.groups[group_id]
            self._base[group_id] = self.instance.feature_source.base_field(g)
        return self._base[group_id]

    def code_field(self, group_id: str, center_index: int) -> np.ndarray:
        key = (group_id, int(center_index))
        if key not in self._codes:
            base = self.base_field(group_id)
            self._codes[key] = soft_vq_code(base, self.groups[group_id], center_index)
        return self._codes[key]


def pooled_code(cache: FeatureCache, segment, group_id: str, center_index: int,
                ledger: Optional[CostLedger] = None) -> float:
    """Mean soft-VQ code over the segment's pixels; charges the ledger on
    first touch of the group / (group, center)."""
    if segment.size == 0:
        raise ValueError("empty segment")
    if ledger is not None:
        charge(ledger, cache.groups[group_id], center_index)
    codes = cache.code_field(group_id, center_index)
    return float(codes[segment.pixels].mean())


def lloyd_kmeans(points: np.ndarray, k: int, seed: int, iters: int = 25) -> np.ndarray:
    """Plain deterministic Lloyd iteration; empty clusters keep their center."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    rng = np.random.default_rng(seed)
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    for _ in range(iters):
        d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d.argmin(axis=1)
        for c in range(k):
            members = points[assign == c]
            if members.shape[0]:
                centers[c] = members.mean(axis=0)
    return centers


def build_dictionaries(groups, instances, dict_size: int = 16, seed: int = 0,
                       samples_per_instance: int = 64, kmeans_iters: int = 25):
    """Fit each group's dictionary with k-means over descriptors sampled
    from the given instances.  Mutates the groups in place."""
    rng = np.random.default_rng(seed)
    for g in sorted(groups, key=lambda g: g.group_id):
        pools = []
        for inst in instances:
            base = inst.feature_source.base_field(g)
            take = min(samples_per_instance, base.shape[0])
            idx = rng.choice(base.shape[0], size=take, replace=False)
            pools.append(base[idx])
        pts = np.concatenate(pools, axis=0)
        g.centers = lloyd_kmeans(pts, dict_size, seed=int(rng.integers(2**32)),
                                 iters=kmeans_iters)
        g._stats = None


SHAPE_GROUP = "shape"
CONTEXT_GROUP = "context"
SHAPE_COST = 2.0
CONTEXT_COST = 1.0


class DescriptorLayout:
    """Fixed column layout of region descriptors.

    Columns: 5 segment shape features (area fraction, bbox ratio, level,
    centroid row/col), then 3*K context features (mean predicted class
    probabilities over the segment, its parent, and its siblings), then one
    column per (group, center) pooled VQ code.  The shape and context blocks
    are cheap pseudo-groups: their base cost is paid once on first use and
    individual columns add nothing.
    """

    N_SHAPE = 5

    def __init__(self, groups, num_classes: int):
        self.groups = list(groups)
        self.num_classes = int(num_classes)
        self.n_context = 3 * self.num_classes
        self.vq_start = self.N_SHAPE + self.n_context
        self._vq_cols = []
        for g in self.groups:
            for i in range(g.num_centers):
                self._vq_cols.append((g.group_id, i))
        self.n_cols = self.vq_start + len(self._vq_cols)
        self._group_by_id = {g.group_id: g for g in self.groups}
        self._group_by_id[SHAPE_GROUP] = FeatureGroup(
            group_id=SHAPE_GROUP, base_dim=0, base_cost=SHAPE_COST, per_center_cost=0.0)
        self._group_by_id[CONTEXT_GROUP] = FeatureGroup(
            group_id=CONTEXT_GROUP, base_dim=0, base_cost=CONTEXT_COST, per_center_cost=0.0)

    def col_feature(self, col: int):
        """(group_id, column-within-group) feature reference for a column."""
        if col < self.N_SHAPE:
            return (SHAPE_GROUP, col)
        if col < self.vq_start:
            return (CONTEXT_GROUP, col - self.N_SHAPE)
        return self._vq_cols[col - self.vq_start]

    def incremental_col_cost(self, col: int, paid_groups, paid_centers) -> float:
        gid, center = self.col_feature(col)
        g = self._group_by_id[gid]
        cost = 0.0
        if gid not in paid_groups:
            cost += g.base_cost
        if (gid, center) not in paid_centers:
            cost += g.per_center_cost
        return cost

    def feature_cost(self, used_features, paid_groups, paid_centers) -> float:
        """Set-difference cost of a feature set against already-paid sets."""
        new_groups = {g for g, _ in used_features} - set(paid_groups)
        new_centers = set(used_features) - set(paid_centers)
        cost = sum(self._group_by_id[g].base_cost for g in sorted(new_groups))
        cost += sum(self._group_by_id[g].per_center_cost for g, _ in sorted(new_centers))
        return cost


# Default simulated cost table: four groups spanning cheap to expensive.
# Per-center costs are a group-level total amortized over a 150-center
# dictionary, so touching one code is far cheaper than the base descriptor.
_DEFAULT_GROUPS = [
    ("grp_a", 6, 29.0, 66.0 / 150.0),
    ("grp_b", 8, 33.0, 165.0 / 150.0),
    ("grp_c", 10, 64.0, 265.0 / 150.0),
    ("grp_d", 12, 93.0, 443.0 / 150.0),
]


def default_feature_groups(num_classes: int, cost_table: Optional[dict] = None):
    groups = []
    for i, (gid, dim, cg, cp) in enumerate(_DEFAULT_GROUPS):
        if cost_table and gid in cost_table:
            cg, cp = cost_table[gid]
        groups.append(
            FeatureGroup(group_id=gid, base_dim=dim, base_cost=cg,
                         per_center_cost=cp, latent_dim=num_classes,
                         map_seed=1000 + i)
        )
    return groups
