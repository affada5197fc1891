"""Leaf-wise regression-tree growth on gradient/hessian statistics.

Splits are exact: candidate thresholds are the midpoints between consecutive
distinct values of a feature among the node's rows. Rows go left when
``x < threshold``.

Two equivalent scans are used. Low-cardinality features keep a per-leaf
histogram with one bin per distinct value; the smaller child's rows are added
to a fresh slot and removed from the parent's, which the larger child inherits.
High-cardinality features keep, for every node, its rows sorted by value; a
split stably partitions those lists so children stay sorted. Both visit the
same candidates in the same order, so the feature/threshold tie rule is shared.
"""

from typing import NamedTuple

import numpy as np
from numba import njit

SORTED_MIN_BINS = 64  # features with more distinct values use sorted row lists


class EncodedMatrix(NamedTuple):
    bins: np.ndarray  # (n, d) int32 global bin ids, ascending with value within a feature
    bin_start: np.ndarray  # feature f owns bins bin_start[f]:bin_start[f + 1]
    bin_values: np.ndarray  # the distinct value behind every bin
    sorted_slot: np.ndarray  # (d,) index into ``sorted_keys`` or -1 for histogram features
    sorted_keys: np.ndarray  # (k, n) ``bin << 32 | row`` ordered by value, one line per sorted feature


def encode_columns(X: np.ndarray, sorted_min_bins: int = SORTED_MIN_BINS) -> EncodedMatrix:
    n, d = X.shape
    bins = np.empty((n, d), dtype=np.int32)
    values, starts = [], [0]
    sorted_slot = np.full(d, -1, dtype=np.int64)
    lines = []
    for f in range(d):
        uniq, inv = np.unique(X[:, f], return_inverse=True)
        inv = inv.reshape(-1)
        bins[:, f] = starts[-1] + inv
        values.append(uniq)
        starts.append(starts[-1] + len(uniq))
        if len(uniq) > sorted_min_bins:
            sorted_slot[f] = len(lines)
            order = np.argsort(inv, kind="stable")
            lines.append((bins[order, f].astype(np.int64) << 32) | order)
    sorted_keys = np.asarray(lines, dtype=np.int64).reshape(len(lines), n)
    return EncodedMatrix(bins, np.asarray(starts, dtype=np.int64),
                         np.concatenate(values).astype(np.float64), sorted_slot, sorted_keys)


def scratch_histograms(num_leaves: int, n_bins: int) -> np.ndarray:
    """Zeroed per-slot (gradient sum, hessian sum, row count) triples."""
    return np.zeros((num_leaves, n_bins, 3))


ROW_MASK = (1 << 32) - 1


@njit(cache=True, nogil=True)
def _midpoint(v, vn):
    thr = 0.5 * (v + vn)
    return thr if thr > v else vn


@njit(cache=True, nogil=True)
def _best_split(hist, slot, lists, s, e, bin_start, bin_values, sorted_slot, gh,
                G, H, min_leaf, lam):
    """Best (gain, feature, bin, threshold) for the node holding positions s:e."""
    d = bin_start.shape[0] - 1
    count = e - s
    parent = G * G / (H + lam)
    best_gain = 0.0
    best_feat = -1
    best_bin = -1
    best_thr = 0.0
    # gain > best  <=>  gl^2 (hr+lam) + gr^2 (hl+lam) > (best + parent)(hl+lam)(hr+lam);
    # the division-free form screens candidates, the exact gain is computed on success
    bar = parent
    if count < 2 * min_leaf:
        return best_gain, best_feat, best_bin, best_thr
    for f in range(d):
        gl = 0.0
        hl = 0.0
        cl = 0
        last = -1
        k = sorted_slot[f]
        if k >= 0:
            for i in range(s, e):
                key = lists[k, i]
                b = key >> 32
                if b != last and last >= 0 and cl >= min_leaf:
                    if count - cl < min_leaf:
                        break
                    gr = G - gl
                    hla = hl + lam
                    hra = H - hl + lam
                    if gl * gl * hra + gr * gr * hla > bar * hla * hra:
                        gain = gl * gl / hla + gr * gr / hra - parent
                        if gain > best_gain:
                            best_gain = gain
                            bar = gain + parent
                            best_feat = f
                            best_bin = last
                            best_thr = _midpoint(bin_values[last], bin_values[b])
                r = key & ROW_MASK
                gl += gh[r, 0]
                hl += gh[r, 1]
                cl += 1
                last = b
            continue
        for b in range(bin_start[f], bin_start[f + 1]):
            c = int(hist[slot, b, 2])
            if c == 0:
                continue
            if last >= 0 and cl >= min_leaf:
                if count - cl < min_leaf:
                    break
                gr = G - gl
                hla = hl + lam
                hra = H - hl + lam
                if gl * gl * hra + gr * gr * hla > bar * hla * hra:
                    gain = gl * gl / hla + gr * gr / hra - parent
                    if gain > best_gain:
                        best_gain = gain
                        bar = gain + parent
                        best_feat = f
                        best_bin = last
                        best_thr = _midpoint(bin_values[last], bin_values[b])
            gl += hist[slot, b, 0]
            hl += hist[slot, b, 1]
            cl += c
            last = b
    return best_gain, best_feat, best_bin, best_thr


@njit(cache=True, nogil=True)
def _move_rows(hist, slot, parent_slot, rows, s, e, bins, dense, gh):
    """Accumulate rows[s:e] into ``slot`` and out of ``parent_slot`` (when >= 0).

    Only histogram features (``dense``) are touched. A parent bin whose count
    reaches zero is reset exactly so free slots stay all zeros.
    """
    G = 0.0
    H = 0.0
    for i in range(s, e):
        r = rows[i]
        g = gh[r, 0]
        h = gh[r, 1]
        G += g
        H += h
        for f in dense:
            b = bins[r, f]
            hist[slot, b, 0] += g
            hist[slot, b, 1] += h
            hist[slot, b, 2] += 1.0
            if parent_slot >= 0:
                left = hist[parent_slot, b, 2] - 1.0
                hist[parent_slot, b, 2] = left
                if left == 0.0:
                    hist[parent_slot, b, 0] = 0.0
                    hist[parent_slot, b, 1] = 0.0
                else:
                    hist[parent_slot, b, 0] -= g
                    hist[parent_slot, b, 1] -= h
    return G, H


@njit(cache=True, nogil=True)
def _stable_partition(line, s, e, goes_left, buf, mask):
    a = s
    nb = 0
    for i in range(s, e):
        # branch-free: write to both sides, advance one
        r = line[i]
        go = goes_left[r & mask]
        line[a] = r
        buf[nb] = r
        a += go
        nb += 1 - go
    for i in range(nb):
        line[a + i] = buf[i]
    return a


@njit(cache=True, nogil=True)
def grow_tree(bins, bin_start, bin_values, sorted_slot, sorted_keys, grad, hess, in_sample,
              num_leaves, min_leaf, lam, hist, row_value):
    """Grow one tree; returns (feature, threshold, left, right, value, gain).

    Rows with ``in_sample`` false are ignored. ``feature[k] == -1`` marks a leaf.
    ``hist`` comes from :func:`scratch_histograms` and is left zeroed on return.
    ``row_value`` receives the tree's output for every row, in-sample or not.
    """
    n = bins.shape[0]
    d = bins.shape[1]
    n_sorted = sorted_keys.shape[0]
    n_dense = 0
    for f in range(d):
        if sorted_slot[f] < 0:
            n_dense += 1
    dense = np.empty(n_dense, dtype=np.int64)
    j = 0
    for f in range(d):
        if sorted_slot[f] < 0:
            dense[j] = f
            j += 1

    m = 0
    for r in range(n):
        if in_sample[r]:
            m += 1
    rows = np.empty(m, dtype=np.int64)
    k = 0
    for r in range(n):
        if in_sample[r]:
            rows[k] = r
            k += 1
    lists = np.empty((n_sorted, m), dtype=np.int64)
    for q in range(n_sorted):
        k = 0
        for i in range(n):
            key = sorted_keys[q, i]
            if in_sample[key & ROW_MASK]:
                lists[q, k] = key
                k += 1

    max_nodes = 2 * num_leaves - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    split_gain = np.zeros(max_nodes)

    start = np.zeros(max_nodes, dtype=np.int64)
    end = np.zeros(max_nodes, dtype=np.int64)
    g_sum = np.zeros(max_nodes)
    h_sum = np.zeros(max_nodes)
    slot_of = np.full(max_nodes, -1, dtype=np.int64)
    cand_gain = np.zeros(max_nodes)
    cand_feat = np.full(max_nodes, -1, dtype=np.int64)
    cand_bin = np.zeros(max_nodes, dtype=np.int64)
    cand_thr = np.zeros(max_nodes)
    is_leaf = np.zeros(max_nodes, dtype=np.bool_)

    gh = np.empty((n, 2))
    for r in range(n):
        gh[r, 0] = grad[r]
        gh[r, 1] = hess[r]

    G, H = _move_rows(hist, 0, -1, rows, 0, m, bins, dense, gh)
    end[0] = m
    g_sum[0] = G
    h_sum[0] = H
    slot_of[0] = 0
    is_leaf[0] = True
    cand_gain[0], cand_feat[0], cand_bin[0], cand_thr[0] = _best_split(
        hist, 0, lists, 0, m, bin_start, bin_values, sorted_slot, gh, G, H, min_leaf, lam
    )

    n_nodes = 1
    n_leaves = 1
    buf = np.empty(m, dtype=np.int64)
    goes_left = np.zeros(n, dtype=np.int64)
    while n_leaves < num_leaves:
        node = -1
        best = 0.0
        for j in range(n_nodes):
            if is_leaf[j] and cand_feat[j] >= 0 and cand_gain[j] > best:
                best = cand_gain[j]
                node = j
        if node < 0:
            break
        s = start[node]
        e = end[node]
        f = cand_feat[node]
        limit = cand_bin[node]
        for i in range(s, e):
            r = rows[i]
            goes_left[r] = bins[r, f] <= limit
        mid = _stable_partition(rows, s, e, goes_left, buf, ROW_MASK)
        for q in range(n_sorted):
            _stable_partition(lists[q], s, e, goes_left, buf, ROW_MASK)

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = cand_thr[node]
        left[node] = lc
        right[node] = rc
        split_gain[node] = cand_gain[node]
        is_leaf[node] = False
        start[lc] = s
        end[lc] = mid
        start[rc] = mid
        end[rc] = e

        # smaller child gets a fresh slot; the larger one inherits the parent's
        parent_slot = slot_of[node]
        small, large = (lc, rc) if mid - s <= e - mid else (rc, lc)
        fresh = n_leaves
        gs, hs = _move_rows(hist, fresh, parent_slot, rows, start[small], end[small], bins, dense, gh)
        slot_of[small] = fresh
        slot_of[large] = parent_slot
        g_sum[small] = gs
        h_sum[small] = hs
        g_sum[large] = g_sum[node] - gs
        h_sum[large] = h_sum[node] - hs
        for c in (lc, rc):
            is_leaf[c] = True
            cand_gain[c], cand_feat[c], cand_bin[c], cand_thr[c] = _best_split(
                hist, slot_of[c], lists, start[c], end[c], bin_start, bin_values, sorted_slot,
                gh, g_sum[c], h_sum[c], min_leaf, lam
            )
        n_leaves += 1

    for j in range(n_nodes):
        if is_leaf[j]:
            value[j] = -g_sum[j] / (h_sum[j] + lam)
            slot = slot_of[j]
            for i in range(start[j], end[j]):
                r = rows[i]
                for f in dense:
                    b = bins[r, f]
                    hist[slot, b, 0] = 0.0
                    hist[slot, b, 1] = 0.0
                    hist[slot, b, 2] = 0.0
    for r in range(n):
        k = 0
        while feature[k] >= 0:
            if bin_values[bins[r, feature[k]]] < threshold[k]:
                k = left[k]
            else:
                k = right[k]
        row_value[r] = value[k]
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), split_gain[:n_nodes].copy())


@njit(cache=True, nogil=True)
def newton_terms(F, y, w, grad, hess):
    """Per-row gradient and hessian of the weighted log-loss at raw scores ``F``."""
    for i in range(F.shape[0]):
        z = F[i]
        if z >= 0:
            p = 1.0 / (1.0 + np.exp(-z))
        else:
            ez = np.exp(z)
            p = ez / (1.0 + ez)
        grad[i] = w[i] * (p - y[i])
        hess[i] = w[i] * p * (1.0 - p)


@njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] < threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out
