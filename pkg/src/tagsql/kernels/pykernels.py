"""Numpy reference implementations of the chain-CRF kernels.

The compiled extension (tagsql.kernels._ckernels) mirrors forward_backward
and viterbi; this module is the import-time fallback and the ground truth
for the backend parity tests.  All kernels work on raw float64 arrays:

    emissions    (n, K)  per-position label scores
    transitions  (K, K)  (prev, next) scores, illegal entries at -inf
    start        (K,)    position-0 scores, illegal entries at -inf
"""

from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis))
    return out + np.squeeze(safe, axis=axis)


def forward_backward(emissions: np.ndarray, transitions: np.ndarray, start: np.ndarray):
    """Log partition, node marginals, and summed edge marginals.

    Returns (log_z, node (n, K), edge (K, K)) where edge[a, b] is the total
    expected count of the a->b transition over the sequence.
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    n, k = emissions.shape
    alpha = np.empty((n, k))
    beta = np.empty((n, k))
    alpha[0] = start + emissions[0]
    for t in range(1, n):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + transitions, axis=0) + emissions[t]
    log_z = float(_logsumexp(alpha[n - 1][None, :], axis=1)[0])
    if not np.isfinite(log_z):
        raise ValueError("no legal label path: log partition is -inf")
    beta[n - 1] = 0.0
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    node = np.exp(alpha + beta - log_z)
    edge = np.zeros((k, k))
    for t in range(n - 1):
        m = alpha[t][:, None] + transitions + (emissions[t + 1] + beta[t + 1])[None, :]
        edge += np.exp(m - log_z)
    return log_z, node, edge


def viterbi(emissions: np.ndarray, transitions: np.ndarray, start: np.ndarray):
    """Best label path and its score; ties go to the lowest label index."""
    emissions = np.asarray(emissions, dtype=np.float64)
    n, k = emissions.shape
    delta = start + emissions[0]
    back = np.zeros((n, k), dtype=np.int64)
    for t in range(1, n):
        scores = delta[:, None] + transitions
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(k)] + emissions[t]
    last = int(np.argmax(delta))
    best = float(delta[last])
    if not np.isfinite(best):
        raise ValueError("no legal label path: best score is -inf")
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = last
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def kbest_viterbi(emissions: np.ndarray, transitions: np.ndarray, start: np.ndarray, k: int):
    """Up to k best label paths as (score, path) in descending score order.

    Ties break toward the path reaching the state through the lowest
    (previous label, previous rank) pair, which makes rank 1 identical to
    viterbi().  Shared by both kernel backends.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    emissions = np.asarray(emissions, dtype=np.float64)
    n, nl = emissions.shape
    scores = np.full((n, nl, k), NEG_INF)
    bp_label = np.full((n, nl, k), -1, dtype=np.int64)
    bp_rank = np.full((n, nl, k), -1, dtype=np.int64)
    scores[0, :, 0] = start + emissions[0]
    trans_rep = np.repeat(transitions, k, axis=0)  # (nl*k, nl), row = prev label*k + rank
    for t in range(1, n):
        total = scores[t - 1].reshape(nl * k, 1) + trans_rep
        order = np.argsort(-total, axis=0, kind="stable")[:k]  # (k, nl)
        top = np.take_along_axis(total, order, axis=0)
        scores[t] = top.T + emissions[t][:, None]
        bp_label[t] = (order // k).T
        bp_rank[t] = (order % k).T

    final = scores[n - 1].reshape(nl * k)
    forder = np.argsort(-final, kind="stable")[:k]
    results = []
    for flat in forder:
        score = float(final[flat])
        if not np.isfinite(score):
            continue
        label, rank = int(flat) // k, int(flat) % k
        path = np.empty(n, dtype=np.int64)
        path[n - 1] = label
        for t in range(n - 1, 0, -1):
            label, rank = int(bp_label[t, label, rank]), int(bp_rank[t, label, rank])
            path[t - 1] = label
        results.append((score, path))
    if not results:
        raise ValueError("no legal label path: all k-best scores are -inf")
    return results
