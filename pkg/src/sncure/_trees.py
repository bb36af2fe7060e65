"""Numba kernels for depth-limited regression trees with exact greedy splits.

Trees are stored in heap layout (children of node ``i`` are ``2i+1`` and
``2i+2``); ``feature[i] == -1`` marks a leaf.
"""
import numpy as np
from numba import njit

_REL_GAIN_TOL = 1e-13


@njit(cache=True)
def grow_tree(sorted_idx, sorted_val, X, r, w, max_depth, min_leaf,
              feature, threshold, value, node_of_row):
    """Fit one weighted least-squares tree to residuals ``r``.

    ``sorted_idx[f]`` lists rows by increasing ``X[:, f]``; ``sorted_val`` holds
    the matching values.  Outputs are written into ``feature``, ``threshold``
    and ``value`` (size ``2**(max_depth+1) - 1``) and ``node_of_row``.
    """
    n_rows = r.shape[0]
    n_feat = sorted_idx.shape[0]
    n_nodes = feature.shape[0]
    for i in range(n_nodes):
        feature[i] = -1
        threshold[i] = 0.0
        value[i] = 0.0
    for j in range(n_rows):
        node_of_row[j] = 0

    W = np.zeros(n_nodes)
    S = np.zeros(n_nodes)
    SS = np.zeros(n_nodes)
    C = np.zeros(n_nodes, dtype=np.int64)
    wl = np.zeros(n_nodes)
    sl = np.zeros(n_nodes)
    cl = np.zeros(n_nodes, dtype=np.int64)
    last = np.zeros(n_nodes)
    best_gain = np.zeros(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    open_node = np.zeros(n_nodes, dtype=np.bool_)
    open_node[0] = True

    for depth in range(max_depth + 1):
        lo = (1 << depth) - 1
        hi = (1 << (depth + 1)) - 1
        for nd in range(lo, hi):
            W[nd] = 0.0
            S[nd] = 0.0
            SS[nd] = 0.0
            C[nd] = 0
        for j in range(n_rows):
            nd = node_of_row[j]
            if nd >= lo and nd < hi:
                W[nd] += w[j]
                S[nd] += w[j] * r[j]
                SS[nd] += w[j] * r[j] * r[j]
                C[nd] += 1
        any_open = False
        for nd in range(lo, hi):
            if open_node[nd] and W[nd] > 0.0:
                value[nd] = S[nd] / W[nd]
                if depth < max_depth and C[nd] >= 2 * min_leaf:
                    any_open = True
                else:
                    open_node[nd] = False
            else:
                open_node[nd] = False
        if not any_open:
            break
        for nd in range(lo, hi):
            best_gain[nd] = 0.0
            best_feat[nd] = -1
        for f in range(n_feat):
            for nd in range(lo, hi):
                wl[nd] = 0.0
                sl[nd] = 0.0
                cl[nd] = 0
                last[nd] = -np.inf
            for j in range(n_rows):
                row = sorted_idx[f, j]
                nd = node_of_row[row]
                if nd < lo or nd >= hi or not open_node[nd]:
                    continue
                v = sorted_val[f, j]
                c_left = cl[nd]
                if c_left >= min_leaf and C[nd] - c_left >= min_leaf and v > last[nd]:
                    wr = W[nd] - wl[nd]
                    if wl[nd] > 0.0 and wr > 0.0:
                        sr = S[nd] - sl[nd]
                        gain = sl[nd] * sl[nd] / wl[nd] + sr * sr / wr - S[nd] * S[nd] / W[nd]
                        if gain > best_gain[nd]:
                            best_gain[nd] = gain
                            best_feat[nd] = f
                            best_thr[nd] = 0.5 * (last[nd] + v)
                wl[nd] += w[row]
                sl[nd] += w[row] * r[row]
                cl[nd] += 1
                last[nd] = v
        for nd in range(lo, hi):
            if not open_node[nd]:
                continue
            node_sse = SS[nd] - S[nd] * S[nd] / W[nd]
            if best_feat[nd] >= 0 and best_gain[nd] > _REL_GAIN_TOL * (node_sse + SS[nd]):
                feature[nd] = best_feat[nd]
                threshold[nd] = best_thr[nd]
                open_node[2 * nd + 1] = True
                open_node[2 * nd + 2] = True
            open_node[nd] = False
        for j in range(n_rows):
            nd = node_of_row[j]
            if nd >= lo and nd < hi and feature[nd] >= 0:
                if X[j, feature[nd]] <= threshold[nd]:
                    node_of_row[j] = 2 * nd + 1
                else:
                    node_of_row[j] = 2 * nd + 2


@njit(cache=True)
def boost(X, y, w, base, rounds, learning_rate, max_depth, min_leaf,
          sorted_idx, sorted_val, features, thresholds, values, losses):
    """Squared-error gradient boosting; fills the per-round tree arrays.

    ``losses[r]`` is the weighted training loss after ``r`` rounds.
    """
    n = y.shape[0]
    F = np.full(n, base)
    r = np.empty(n)
    node_of_row = np.zeros(n, dtype=np.int64)
    loss = 0.0
    for j in range(n):
        r[j] = y[j] - F[j]
        loss += w[j] * r[j] * r[j]
    losses[0] = loss
    for t in range(rounds):
        grow_tree(sorted_idx, sorted_val, X, r, w, max_depth, min_leaf,
                  features[t], thresholds[t], values[t], node_of_row)
        loss = 0.0
        for j in range(n):
            F[j] += learning_rate * values[t, node_of_row[j]]
            r[j] = y[j] - F[j]
            loss += w[j] * r[j] * r[j]
        losses[t + 1] = loss


@njit(cache=True)
def predict_trees(X, base, learning_rate, features, thresholds, values, n_trees):
    n = X.shape[0]
    out = np.full(n, base)
    for j in range(n):
        acc = 0.0
        for t in range(n_trees):
            nd = 0
            while features[t, nd] >= 0:
                if X[j, features[t, nd]] <= thresholds[t, nd]:
                    nd = 2 * nd + 1
                else:
                    nd = 2 * nd + 2
            acc += values[t, nd]
        out[j] += learning_rate * acc
    return out


@njit(cache=True)
def predict_trees_staged(X, base, learning_rate, features, thresholds, values, stages):
    """Predictions after each round count listed in ``stages`` (ascending)."""
    n = X.shape[0]
    out = np.empty((n, stages.shape[0]))
    for j in range(n):
        acc = 0.0
        t = 0
        for s in range(stages.shape[0]):
            while t < stages[s]:
                nd = 0
                while features[t, nd] >= 0:
                    if X[j, features[t, nd]] <= thresholds[t, nd]:
                        nd = 2 * nd + 1
                    else:
                        nd = 2 * nd + 2
                acc += values[t, nd]
                t += 1
            out[j, s] = base + learning_rate * acc
    return out


# ---------------------------------------------------------------------------
# Histogram form of the same exact greedy search.  Every distinct feature value
# gets its own bin, so the candidate splits (midpoints between consecutive
# distinct values inside a node) and their gains are exactly those of the
# presorted scan; only the bookkeeping differs.  A sibling's histogram is the
# parent's minus the smaller child's.

@njit(cache=True)
def _accumulate(Xb, rows_node, node, r, w, HW, HS, HC, slot):
    n_rows, n_feat = Xb.shape
    for j in range(n_rows):
        if rows_node[j] != node:
            continue
        wj = w[j]
        sj = wj * r[j]
        for f in range(n_feat):
            b = Xb[j, f]
            HW[slot, f, b] += wj
            HS[slot, f, b] += sj
            HC[slot, f, b] += 1


@njit(cache=True)
def grow_tree_hist(X, Xb, bin_values, n_bins, r, w, max_depth, min_leaf,
                   feature, threshold, value, node_of_row, HW, HS, HC):
    """Exact greedy tree via per-node histograms over distinct values.

    ``Xb[j, f]`` is the rank of ``X[j, f]`` among the distinct values of
    feature ``f`` (listed in ``bin_values[f, :n_bins[f]]``).  ``HW``, ``HS`` and
    ``HC`` are scratch arrays of shape ``(2**max_depth - 1, F, max_bins)``.
    """
    n_rows, n_feat = Xb.shape
    n_nodes = feature.shape[0]
    n_split_nodes = HW.shape[0]
    for i in range(n_nodes):
        feature[i] = -1
        threshold[i] = 0.0
        value[i] = 0.0
    for j in range(n_rows):
        node_of_row[j] = 0

    W = np.zeros(n_nodes)
    S = np.zeros(n_nodes)
    SS = np.zeros(n_nodes)
    C = np.zeros(n_nodes, dtype=np.int64)
    open_node = np.zeros(n_nodes, dtype=np.bool_)
    open_node[0] = True
    best_bin = np.zeros(n_nodes, dtype=np.int64)
    have_hist = np.zeros(n_nodes, dtype=np.bool_)

    for depth in range(max_depth + 1):
        lo = (1 << depth) - 1
        hi = (1 << (depth + 1)) - 1
        for nd in range(lo, hi):
            W[nd] = 0.0
            S[nd] = 0.0
            SS[nd] = 0.0
            C[nd] = 0
        for j in range(n_rows):
            nd = node_of_row[j]
            if nd >= lo and nd < hi:
                W[nd] += w[j]
                S[nd] += w[j] * r[j]
                SS[nd] += w[j] * r[j] * r[j]
                C[nd] += 1
        any_open = False
        for nd in range(lo, hi):
            if open_node[nd] and W[nd] > 0.0:
                value[nd] = S[nd] / W[nd]
                if depth < max_depth and C[nd] >= 2 * min_leaf:
                    any_open = True
                else:
                    open_node[nd] = False
            else:
                open_node[nd] = False
        if not any_open:
            break
        # histograms of open nodes: accumulate the smaller sibling, subtract for the other
        for nd in range(lo, hi):
            if not open_node[nd] or have_hist[nd]:
                continue
            for f in range(n_feat):
                for b in range(n_bins[f]):
                    HW[nd, f, b] = 0.0
                    HS[nd, f, b] = 0.0
                    HC[nd, f, b] = 0
            if nd == 0:
                _accumulate(Xb, node_of_row, 0, r, w, HW, HS, HC, 0)
                have_hist[0] = True
                continue
            sib = nd + 1 if nd % 2 == 1 else nd - 1
            parent = (nd - 1) // 2
            small, large = nd, sib
            if C[sib] < C[nd]:
                small, large = sib, nd
            if small != nd:
                for f in range(n_feat):
                    for b in range(n_bins[f]):
                        HW[small, f, b] = 0.0
                        HS[small, f, b] = 0.0
                        HC[small, f, b] = 0
            _accumulate(Xb, node_of_row, small, r, w, HW, HS, HC, small)
            have_hist[small] = True
            if large < n_split_nodes:
                for f in range(n_feat):
                    for b in range(n_bins[f]):
                        HW[large, f, b] = HW[parent, f, b] - HW[small, f, b]
                        HS[large, f, b] = HS[parent, f, b] - HS[small, f, b]
                        HC[large, f, b] = HC[parent, f, b] - HC[small, f, b]
                have_hist[large] = True
        for nd in range(lo, hi):
            if not open_node[nd]:
                continue
            best_gain = 0.0
            best_f = -1
            base = S[nd] * S[nd] / W[nd]
            for f in range(n_feat):
                wl = 0.0
                sl = 0.0
                cl = 0
                prev = -1
                for b in range(n_bins[f]):
                    cb = HC[nd, f, b]
                    if cb == 0:
                        continue
                    if prev >= 0 and cl >= min_leaf and C[nd] - cl >= min_leaf:
                        wr = W[nd] - wl
                        if wl > 0.0 and wr > 0.0:
                            sr = S[nd] - sl
                            gain = sl * sl / wl + sr * sr / wr - base
                            if gain > best_gain:
                                best_gain = gain
                                best_f = f
                                best_bin[nd] = prev
                                threshold[nd] = 0.5 * (bin_values[f, prev] + bin_values[f, b])
                    wl += HW[nd, f, b]
                    sl += HS[nd, f, b]
                    cl += cb
                    prev = b
            node_sse = SS[nd] - base
            if best_f >= 0 and best_gain > _REL_GAIN_TOL * (node_sse + SS[nd]):
                feature[nd] = best_f
                open_node[2 * nd + 1] = True
                open_node[2 * nd + 2] = True
            else:
                threshold[nd] = 0.0
            open_node[nd] = False
        for j in range(n_rows):
            nd = node_of_row[j]
            if nd >= lo and nd < hi and feature[nd] >= 0:
                if X[j, feature[nd]] <= threshold[nd]:
                    node_of_row[j] = 2 * nd + 1
                else:
                    node_of_row[j] = 2 * nd + 2


@njit(cache=True)
def boost_hist(X, Xb, bin_values, n_bins, y, w, base, rounds, learning_rate, max_depth,
               min_leaf, features, thresholds, values, losses):
    n = y.shape[0]
    n_split = (1 << max_depth) - 1
    max_bins = bin_values.shape[1]
    n_feat = X.shape[1]
    HW = np.zeros((n_split, n_feat, max_bins))
    HS = np.zeros((n_split, n_feat, max_bins))
    HC = np.zeros((n_split, n_feat, max_bins), dtype=np.int64)
    F = np.full(n, base)
    r = np.empty(n)
    node_of_row = np.zeros(n, dtype=np.int64)
    loss = 0.0
    for j in range(n):
        r[j] = y[j] - F[j]
        loss += w[j] * r[j] * r[j]
    losses[0] = loss
    for t in range(rounds):
        grow_tree_hist(X, Xb, bin_values, n_bins, r, w, max_depth, min_leaf,
                       features[t], thresholds[t], values[t], node_of_row, HW, HS, HC)
        loss = 0.0
        for j in range(n):
            F[j] += learning_rate * values[t, node_of_row[j]]
            r[j] = y[j] - F[j]
            loss += w[j] * r[j] * r[j]
        losses[t + 1] = loss
