"""Cost-regularized, vector-valued regression trees.

Splits are found by exact search over midpoints of consecutive distinct
feature values; each candidate split is scored by its weighted-SSE reduction
minus ``lam`` times the incremental feature cost of the split column (given
features already paid for by the model or already placed in this tree).
"""

from __future__ import annotations

import numpy as np

from . import kernels

__all__ = ["RegressionTree", "train_tree", "predict_tree", "tree_cost"]

_LEAF = -1


class RegressionTree:
    """Binary regression tree with K-vector leaves, stored as flat arrays.

    Node i: ``cols[i]`` is the split column (-1 for a leaf), ``thrs[i]`` the
    threshold (go left when value <= threshold), ``lefts``/``rights`` child
    indices, ``values[i]`` the K-vector for leaves (None for internals).
    """

    def __init__(self, num_classes: int, depth_limit: int, lam: float,
                 prediction_cost: float = 1.0):
        self.num_classes = num_classes
        self.depth_limit = depth_limit
        self.lam = lam
        self.prediction_cost = prediction_cost
        self.cols = []
        self.thrs = []
        self.lefts = []
        self.rights = []
        self.values = []
        self.used_features = set()   # {(group_id, center_index)}

    def _add_node(self):
        self.cols.append(_LEAF)
        self.thrs.append(0.0)
        self.lefts.append(-1)
        self.rights.append(-1)
        self.values.append(None)
        return len(self.cols) - 1

    @property
    def num_nodes(self) -> int:
        return len(self.cols)

    @property
    def depth(self) -> int:
        def d(i):
            if self.cols[i] == _LEAF:
                return 0
            return 1 + max(d(self.lefts[i]), d(self.rights[i]))
        return d(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Route each row to a leaf; returns (n, K)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty((X.shape[0], self.num_classes))
        idx = np.arange(X.shape[0])
        stack = [(0, idx)]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            if self.cols[node] == _LEAF:
                out[rows] = self.values[node]
                continue
            go_left = X[rows, self.cols[node]] <= self.thrs[node]
            stack.append((self.lefts[node], rows[go_left]))
            stack.append((self.rights[node], rows[~go_left]))
        return out

    def predict_lazy(self, fetch) -> tuple:
        """Route one sample using ``fetch(col) -> float`` to obtain feature
        values on demand; returns (leaf K-vector, list of columns touched)."""
        node = 0
        touched = []
        while self.cols[node] != _LEAF:
            c = self.cols[node]
            touched.append(c)
            node = self.lefts[node] if fetch(c) <= self.thrs[node] else self.rights[node]
        return self.values[node], touched

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "depth_limit": self.depth_limit,
            "lam": self.lam,
            "prediction_cost": self.prediction_cost,
            "cols": list(map(int, self.cols)),
            "thrs": [float(t) for t in self.thrs],
            "lefts": list(map(int, self.lefts)),
            "rights": list(map(int, self.rights)),
            "values": [None if v is None else [float(x) for x in v] for v in self.values],
            "used_features": sorted([list(f) for f in self.used_features]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        t = cls(d["num_classes"], d["depth_limit"], d["lam"], d["prediction_cost"])
        t.cols = list(d["cols"])
        t.thrs = list(d["thrs"])
        t.lefts = list(d["lefts"])
        t.rights = list(d["rights"])
        t.values = [None if v is None else np.asarray(v, dtype=np.float64)
                    for v in d["values"]]
        t.used_features = {(f[0], int(f[1])) for f in d["used_features"]}
        return t


def train_tree(X, Y, w, depth_limit: int, lam: float = 0.0, layout=None,
               paid_groups=(), paid_centers=(), prediction_cost: float = 1.0,
               presorted=None) -> RegressionTree:
    """Greedy top-down training on a weighted vector-target dataset.

    ``presorted`` may carry (n_cols, n) stable argsort indices of X's
    columns to share the sort across learners trained on the same dataset.
    A split is kept only when its SSE reduction minus the cost penalty is
    strictly positive.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("dataset must be a nonempty (n, n_cols) matrix")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    n, n_cols = X.shape
    if presorted is None:
        presorted = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)

    tree = RegressionTree(Y.shape[1], depth_limit, lam, prediction_cost)
    paid_g = set(paid_groups)
    paid_c = set(paid_centers)
    zero_pen = np.zeros(n_cols)

    def penalties():
        if lam == 0.0 or layout is None:
            return zero_pen
        pg = paid_g | {g for g, _ in tree.used_features}
        pc = paid_c | tree.used_features
        return np.array(
            [lam * layout.incremental_col_cost(c, pg, pc) for c in range(n_cols)]
        )

    def build(order, depth):
        node = tree._add_node()
        rows = order[0]
        wn = w[rows]
        tree.values[node] = (wn[:, None] * Y[rows]).sum(axis=0) / wn.sum()
        if depth >= depth_limit or rows.size < 2:
            return node
        col, thr, net = kernels.best_split(order, X, w, Y, penalties())
        if col < 0:
            return node
        feat = layout.col_feature(col) if layout is not None else None
        if feat is not None:
            tree.used_features.add(feat)
        go_left = X[:, col] <= thr
        masks = go_left[order]
        n_left = int(masks[0].sum())
        left_order = np.ascontiguousarray(order[masks].reshape(n_cols, n_left))
        right_order = np.ascontiguousarray(order[~masks].reshape(n_cols, rows.size - n_left))
        tree.cols[node] = int(col)
        tree.thrs[node] = float(thr)
        tree.values[node] = None
        tree.lefts[node] = build(left_order, depth + 1)
        tree.rights[node] = build(right_order, depth + 1)
        return node

    build(presorted, 0)
    return tree


def predict_tree(tree: RegressionTree, psi) -> np.ndarray:
    """Leaf K-vector for one descriptor (or (n, K) for a batch)."""
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim == 1:
        return tree.predict(psi[None, :])[0]
    return tree.predict(psi)


def tree_cost(tree: RegressionTree, layout, paid_groups, paid_centers) -> float:
    """prediction_cost plus set-difference feature costs of the tree."""
    return tree.prediction_cost + layout.feature_cost(
        tree.used_features, paid_groups, paid_centers
    )
