# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled chain-CRF kernels: forward-backward and Viterbi.

Mirrors tagsql.kernels.pykernels; see that module for the array contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, isfinite, INFINITY

cnp.import_array()


cdef double _lse(double[::1] buf, Py_ssize_t n) noexcept nogil:
    cdef double m = -INFINITY
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        if buf[i] > m:
            m = buf[i]
    if m == -INFINITY:
        return -INFINITY
    for i in range(n):
        if buf[i] != -INFINITY:
            s += exp(buf[i] - m)
    return m + log(s)


def forward_backward(emissions, transitions, start):
    cdef double[:, ::1] em = np.ascontiguousarray(emissions, dtype=np.float64)
    cdef double[:, ::1] trans = np.ascontiguousarray(transitions, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(start, dtype=np.float64)
    cdef Py_ssize_t n = em.shape[0]
    cdef Py_ssize_t k = em.shape[1]

    alpha_arr = np.empty((n, k), dtype=np.float64)
    beta_arr = np.empty((n, k), dtype=np.float64)
    node_arr = np.empty((n, k), dtype=np.float64)
    edge_arr = np.zeros((k, k), dtype=np.float64)
    work_arr = np.empty(k, dtype=np.float64)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] node = node_arr
    cdef double[:, ::1] edge = edge_arr
    cdef double[::1] work = work_arr

    cdef Py_ssize_t t, i, j
    cdef double log_z, v

    with nogil:
        for j in range(k):
            alpha[0, j] = st[j] + em[0, j]
        for t in range(1, n):
            for j in range(k):
                for i in range(k):
                    work[i] = alpha[t - 1, i] + trans[i, j]
                alpha[t, j] = _lse(work, k) + em[t, j]
        for j in range(k):
            work[j] = alpha[n - 1, j]
        log_z = _lse(work, k)

    if not isfinite(log_z):
        raise ValueError("no legal label path: log partition is -inf")

    with nogil:
        for j in range(k):
            beta[n - 1, j] = 0.0
        for t in range(n - 2, -1, -1):
            for i in range(k):
                for j in range(k):
                    work[j] = trans[i, j] + em[t + 1, j] + beta[t + 1, j]
                beta[t, i] = _lse(work, k)
        for t in range(n):
            for j in range(k):
                v = alpha[t, j] + beta[t, j] - log_z
                node[t, j] = exp(v) if v != -INFINITY else 0.0
        for t in range(n - 1):
            for i in range(k):
                if alpha[t, i] == -INFINITY:
                    continue
                for j in range(k):
                    v = alpha[t, i] + trans[i, j] + em[t + 1, j] + beta[t + 1, j] - log_z
                    if v != -INFINITY:
                        edge[i, j] += exp(v)
    return log_z, node_arr, edge_arr


def viterbi(emissions, transitions, start):
    cdef double[:, ::1] em = np.ascontiguousarray(emissions, dtype=np.float64)
    cdef double[:, ::1] trans = np.ascontiguousarray(transitions, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(start, dtype=np.float64)
    cdef Py_ssize_t n = em.shape[0]
    cdef Py_ssize_t k = em.shape[1]

    delta_arr = np.empty(k, dtype=np.float64)
    next_arr = np.empty(k, dtype=np.float64)
    back_arr = np.zeros((n, k), dtype=np.int64)
    path_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] delta = delta_arr
    cdef double[::1] nxt = next_arr
    cdef cnp.int64_t[:, ::1] back = back_arr
    cdef cnp.int64_t[::1] path = path_arr

    cdef Py_ssize_t t, i, j, best_i, last
    cdef double best, v, best_final

    with nogil:
        for j in range(k):
            delta[j] = st[j] + em[0, j]
        for t in range(1, n):
            for j in range(k):
                best = -INFINITY
                best_i = 0
                for i in range(k):
                    v = delta[i] + trans[i, j]
                    if v > best:
                        best = v
                        best_i = i
                nxt[j] = best + em[t, j]
                back[t, j] = best_i
            for j in range(k):
                delta[j] = nxt[j]
        last = 0
        best_final = -INFINITY
        for j in range(k):
            if delta[j] > best_final:
                best_final = delta[j]
                last = j

    if not isfinite(best_final):
        raise ValueError("no legal label path: best score is -inf")

    path[n - 1] = last
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr, best_final
