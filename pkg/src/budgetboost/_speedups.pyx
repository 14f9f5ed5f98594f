# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: tree split scan and weighted cross-entropy risk.

Semantics (accumulation order, tie-breaking) match _kernels_py exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

USING_EXTENSION = True


def best_split(cnp.int64_t[:, ::1] order,
               cnp.float64_t[:, ::1] values,
               cnp.float64_t[::1] weights,
               cnp.float64_t[:, ::1] targets,
               cnp.float64_t[::1] penalties):
    cdef Py_ssize_t n_cols = order.shape[0]
    cdef Py_ssize_t m = order.shape[1]
    cdef Py_ssize_t k_dim = targets.shape[1]
    if m < 2:
        return -1, 0.0, 0.0

    cdef cnp.float64_t[::1] sy_total = np.zeros(k_dim)
    cdef cnp.float64_t[::1] syl = np.zeros(k_dim)
    cdef double w_total = 0.0, corr_p = 0.0
    cdef Py_ssize_t i, c, k, r
    cdef double w, wl, wr, cl, cr, gain, net, v_here, v_next
    cdef long best_col = -1
    cdef double best_thr = 0.0, best_net = 0.0

    for i in range(m):
        r = order[0, i]
        w_total += weights[r]
        for k in range(k_dim):
            sy_total[k] += weights[r] * targets[r, k]
    for k in range(k_dim):
        corr_p += sy_total[k] * sy_total[k]
    corr_p /= w_total

    for c in range(n_cols):
        wl = 0.0
        for k in range(k_dim):
            syl[k] = 0.0
        for i in range(m - 1):
            r = order[c, i]
            w = weights[r]
            wl += w
            for k in range(k_dim):
                syl[k] += w * targets[r, k]
            v_here = values[r, c]
            v_next = values[order[c, i + 1], c]
            if v_here < v_next:
                wr = w_total - wl
                cl = 0.0
                cr = 0.0
                for k in range(k_dim):
                    cl += syl[k] * syl[k]
                    cr += (sy_total[k] - syl[k]) * (sy_total[k] - syl[k])
                gain = cl / wl + cr / wr - corr_p
                net = gain - penalties[c]
                if net > best_net:
                    best_net = net
                    best_col = c
                    best_thr = 0.5 * (v_here + v_next)
    return best_col, best_thr, best_net


def weighted_risk(cnp.float64_t[:, ::1] scores, cnp.float64_t[:, ::1] psum):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k_dim = scores.shape[1]
    cdef Py_ssize_t i, k
    cdef double total = 0.0, mx, s, lse, prow, dot
    for i in range(n):
        mx = scores[i, 0]
        for k in range(1, k_dim):
            if scores[i, k] > mx:
                mx = scores[i, k]
        s = 0.0
        for k in range(k_dim):
            s += exp(scores[i, k] - mx)
        lse = mx + log(s)
        prow = 0.0
        dot = 0.0
        for k in range(k_dim):
            prow += psum[i, k]
            dot += psum[i, k] * scores[i, k]
        total += prow * lse - dot
    return total


def risk_at_alpha(cnp.float64_t[:, ::1] scores, cnp.float64_t[:, ::1] psum,
                  cnp.float64_t[:, ::1] update, double alpha):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k_dim = scores.shape[1]
    cdef Py_ssize_t i, k
    cdef double total = 0.0, mx, s, lse, prow, dot, y
    cdef double[8] row
    if k_dim > 8:
        return weighted_risk(np.asarray(scores) + alpha * np.asarray(update), psum)
    for i in range(n):
        mx = -1e300
        for k in range(k_dim):
            y = scores[i, k] + alpha * update[i, k]
            row[k] = y
            if y > mx:
                mx = y
        s = 0.0
        for k in range(k_dim):
            s += exp(row[k] - mx)
        lse = mx + log(s)
        prow = 0.0
        dot = 0.0
        for k in range(k_dim):
            prow += psum[i, k]
            dot += psum[i, k] * row[k]
        total += prow * lse - dot
    return total
