"""Compiled kernels for CART fitting and tree/forest prediction.

All randomness inside the kernels comes from an explicit splitmix64 stream so
results are bit-identical for a given seed regardless of thread count or
scheduling. Node buffers are preallocated by the callers; each kernel returns
the number of nodes actually written.
"""

import numpy as np
from numba import njit, prange

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    return _mix64(state[0])


@njit(cache=True)
def tree_seed(seed, index):
    """Stream seed for tree `index` of a forest seeded with `seed`."""
    return _mix64(_mix64(U64(seed)) ^ (U64(index) * _GOLDEN))


@njit(cache=True)
def build_tree(
    X, y, w, idx, pool, mtry, max_depth, min_leaf, seed,
    feat, thr, left, right, value, count,
):
    """Greedy variance-reduction CART over the rows listed in `idx`.

    Candidate thresholds sit at midpoints of sorted distinct feature values.
    Ties in gain resolve to the lowest feature index, then the smallest
    threshold. `idx` is permuted in place. Returns the node count.
    """
    n = idx.shape[0]
    n_pool = pool.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = _mix64(U64(seed))
    chosen = np.empty(n_pool, dtype=np.int64)
    vbuf = np.empty(n, dtype=np.float64)
    cap = feat.shape[0]
    stack = np.empty((cap + 2, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        s = end - start
        sw = 0.0
        swy = 0.0
        sy = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(start, end):
            r = idx[i]
            sw += w[r]
            swy += w[r] * y[r]
            sy += y[r]
            if y[r] < ymin:
                ymin = y[r]
            if y[r] > ymax:
                ymax = y[r]
        if ymin == ymax:
            value[node] = ymin  # exact mean of identical targets, no summation drift
        else:
            value[node] = swy / sw if sw > 0.0 else sy / s
        count[node] = s
        feat[node] = -1
        if depth >= max_depth or s < 2 * min_leaf or ymin == ymax:
            continue

        # feature subset for this split: partial Fisher-Yates, then ascending
        m = mtry if mtry < n_pool else n_pool
        for j in range(n_pool):
            chosen[j] = pool[j]
        for j in range(m):
            k = j + int(_next_u64(state) % U64(n_pool - j))
            tmp = chosen[j]
            chosen[j] = chosen[k]
            chosen[k] = tmp
        for j in range(1, m):
            key = chosen[j]
            k = j - 1
            while k >= 0 and chosen[k] > key:
                chosen[k + 1] = chosen[k]
                k -= 1
            chosen[k + 1] = key

        best_gain = -1.0
        best_f = -1
        best_thr = 0.0
        for jj in range(m):
            f = chosen[jj]
            for i in range(s):
                vbuf[i] = X[idx[start + i], f]
            order = np.argsort(vbuf[:s], kind="mergesort")
            swl = 0.0
            swyl = 0.0
            for i in range(s - 1):
                r = idx[start + order[i]]
                swl += w[r]
                swyl += w[r] * y[r]
                v0 = vbuf[order[i]]
                v1 = vbuf[order[i + 1]]
                if v0 == v1:
                    continue
                cl = i + 1
                if cl < min_leaf or s - cl < min_leaf:
                    continue
                swr = sw - swl
                if swl <= 0.0 or swr <= 0.0:
                    continue
                gain = swyl * swyl / swl + (swy - swyl) * (swy - swyl) / swr - swy * swy / sw
                if gain > best_gain:
                    mid = v0 + 0.5 * (v1 - v0)
                    if not (mid >= v0 and mid < v1):
                        mid = v0  # adjacent floats: fall back to the lower value
                    best_gain = gain
                    best_f = f
                    best_thr = mid
        if best_f < 0:
            continue

        lo = start
        hi = end - 1
        while lo <= hi:
            if X[idx[lo], best_f] <= best_thr:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        feat[node] = best_f
        thr[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        stack[top, 0] = left[node]
        stack[top, 1] = start
        stack[top, 2] = lo
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = right[node]
        stack[top, 1] = lo
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
    return n_nodes


@njit(cache=True, parallel=True)
def build_forest(
    X, y, w, n_trees, mtry, max_depth, min_leaf, seed, bootstrap, max_nodes,
    feat, thr, left, right, value, count, sizes,
):
    """Fit `n_trees` CART trees into per-tree slices of the node buffers.

    Each tree owns an independent splitmix64 stream derived from
    (seed, tree index), so results do not depend on thread count.
    """
    n = X.shape[0]
    p = X.shape[1]
    for t in prange(n_trees):
        state = np.empty(1, dtype=np.uint64)
        state[0] = tree_seed(seed, t)
        idx = np.empty(n, dtype=np.int64)
        if bootstrap:
            for i in range(n):
                idx[i] = int(_next_u64(state) % U64(n))
        else:
            for i in range(n):
                idx[i] = i
        pool = np.arange(p)
        o = t * max_nodes
        sizes[t] = build_tree(
            X, y, w, idx, pool, mtry, max_depth, min_leaf, _next_u64(state),
            feat[o : o + max_nodes], thr[o : o + max_nodes],
            left[o : o + max_nodes], right[o : o + max_nodes],
            value[o : o + max_nodes], count[o : o + max_nodes],
        )


@njit(cache=True, inline="always")
def _route(X, row, feat, thr, left, right, base):
    node = 0
    while feat[base + node] >= 0:
        if X[row, feat[base + node]] <= thr[base + node]:
            node = left[base + node]
        else:
            node = right[base + node]
    return base + node


@njit(cache=True, parallel=True)
def tree_predict(X, feat, thr, left, right, value, out):
    for i in prange(X.shape[0]):
        out[i] = value[_route(X, i, feat, thr, left, right, 0)]


@njit(cache=True, parallel=True)
def forest_predict(X, feat, thr, left, right, value, offsets, out):
    n_trees = offsets.shape[0] - 1
    for i in prange(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            acc += value[_route(X, i, feat, thr, left, right, offsets[t])]
        out[i] = acc / n_trees


@njit(cache=True, parallel=True)
def forest_predict_per_tree(X, feat, thr, left, right, value, offsets, out):
    n_trees = offsets.shape[0] - 1
    for i in prange(X.shape[0]):
        for t in range(n_trees):
            out[t, i] = value[_route(X, i, feat, thr, left, right, offsets[t])]
