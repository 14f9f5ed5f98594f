"""Pure-numpy implementations of the hot kernels.

Mirrors the semantics (including accumulation order and tie-breaking) of the
compiled extension in ``_speedups.pyx``; selected at import by ``kernels``.
"""

from __future__ import annotations

import numpy as np

USING_EXTENSION = False


def best_split(order, values, weights, targets, penalties):
    """Best weighted-SSE split over all columns.

    order: (n_cols, m) int64, node rows sorted ascending per column.
    values: (n_rows, n_cols) float64 feature matrix.
    weights: (n_rows,); targets: (n_rows, K).
    penalties: (n_cols,) additive score penalty per column.

    Returns (col, threshold, net_gain); col == -1 when no split has
    net_gain > 0.  Ties break to the lowest column, then lowest threshold.
    """
    n_cols, m = order.shape
    if m < 2:
        return -1, 0.0, 0.0
    rows0 = order[0]
    w0 = weights[rows0]
    wy0 = w0[:, None] * targets[rows0]
    w_total = float(np.cumsum(w0)[-1])
    sy_total = np.cumsum(wy0, axis=0)[-1]
    corr_p = float((sy_total ** 2).sum() / w_total)

    best_col, best_thr, best_net = -1, 0.0, 0.0
    for c in range(n_cols):
        o = order[c]
        v = values[o, c]
        cut = np.nonzero(v[:-1] < v[1:])[0]
        if cut.size == 0:
            continue
        w = weights[o]
        wl = np.cumsum(w)[cut]
        wy = np.cumsum(w[:, None] * targets[o], axis=0)[cut]
        wr = w_total - wl
        syr = sy_total[None, :] - wy
        gain = (wy ** 2).sum(axis=1) / wl + (syr ** 2).sum(axis=1) / wr - corr_p
        net = gain - penalties[c]
        i = int(np.argmax(net))
        if net[i] > best_net:
            best_col = c
            best_thr = 0.5 * (v[cut[i]] + v[cut[i] + 1])
            best_net = float(net[i])
    return best_col, best_thr, best_net


def weighted_risk(scores, psum):
    """sum_rows [ (sum_k P_k) * logsumexp(y) - sum_k P_k y_k ].

    ``psum`` rows are ground-truth probabilities summed over the pixels a
    row aggregates; this equals the pixel-level cross-entropy exactly when
    scores are constant over those pixels.
    """
    m = scores.max(axis=1)
    lse = m + np.log(np.exp(scores - m[:, None]).sum(axis=1))
    per_row = psum.sum(axis=1) * lse - (psum * scores).sum(axis=1)
    return float(per_row.sum())


def risk_at_alpha(scores, psum, update, alpha):
    """weighted_risk of scores + alpha * update."""
    return weighted_risk(scores + alpha * update, psum)
