"""Numba kernels for the randomized greedy nearest-neighbor path solver.

The kernels work on the full patch grid; subsets (e.g. per-class orderings)
are handled by pre-marking non-member cells as visited. Distances are
accumulated in float64 over float32 patch values, as raw squared sums
internally, divided by the relevant pixel count only where a mean distance
is consumed (softmax choice, path cost). Rows are summed whole with no
early abort: the plain reduction auto-vectorizes and beats branchy aborts
for the patch sizes used here. Ties break toward the lowest patch index.

When the search window always covers the whole grid, a dedicated kernel
scans a compacted candidate buffer (rows swap-removed as patches are
visited) in parallel blocks. The merge keeps the two smallest candidates
under the total order (distance, index), which is independent of the block
partition, so results are bit-identical for any thread count.

Counter slots: 0 = window distance evals, 1 = fallback distance evals,
2 = global (patch-space) fallbacks, 3 = spatial fallbacks.
"""

from __future__ import annotations

import threading

import numpy as np
from numba import get_num_threads, njit, prange

N_COUNTERS = 4
EVALS_WINDOW = 0
EVALS_FALLBACK = 1
FALLBACKS_GLOBAL = 2
FALLBACKS_SPATIAL = 3

_HUGE = 1e300

# the omp/workqueue threading layers are not guaranteed safe for concurrent
# invocation, so parallel-kernel calls are serialized at module level
_PARALLEL_LOCK = threading.Lock()


@njit(cache=True, nogil=True, fastmath=True)
def _dist64(xc, xi, n):
    s = 0.0
    for p in range(n):
        d = np.float64(xc[p]) - np.float64(xi[p])
        s += d * d
    return s


@njit(cache=True, nogil=True)
def _spatial_nearest(visited, grid_h, grid_w, r0, c0):
    """Nearest unvisited grid cell by Euclidean distance, ties to lowest index.

    Scans expanding Chebyshev rings; a ring at radius rad cannot contain a
    squared distance below rad*rad, which bounds the search.
    """
    best_d2 = np.int64(1) << 62
    best_i = np.int64(-1)
    max_rad = grid_h + grid_w
    for rad in range(1, max_rad + 1):
        if best_i >= 0 and np.int64(rad) * np.int64(rad) > best_d2:
            break
        for s in range(2):
            rr = r0 - rad if s == 0 else r0 + rad
            if rr < 0 or rr >= grid_h:
                continue
            c_start = c0 - rad
            if c_start < 0:
                c_start = 0
            c_end = c0 + rad
            if c_end > grid_w - 1:
                c_end = grid_w - 1
            dr2 = np.int64(rad) * np.int64(rad)
            for c in range(c_start, c_end + 1):
                i = c * grid_h + rr
                if visited[i]:
                    continue
                dc = np.int64(c - c0)
                d2 = dr2 + dc * dc
                if d2 < best_d2 or (d2 == best_d2 and i < best_i):
                    best_d2 = d2
                    best_i = i
        for s in range(2):
            cc = c0 - rad if s == 0 else c0 + rad
            if cc < 0 or cc >= grid_w:
                continue
            r_start = r0 - rad + 1
            if r_start < 0:
                r_start = 0
            r_end = r0 + rad - 1
            if r_end > grid_h - 1:
                r_end = grid_h - 1
            base = cc * grid_h
            dc2 = np.int64(rad) * np.int64(rad)
            for r in range(r_start, r_end + 1):
                i = base + r
                if visited[i]:
                    continue
                dr = np.int64(r - r0)
                d2 = dc2 + dr * dr
                if d2 < best_d2 or (d2 == best_d2 and i < best_i):
                    best_d2 = d2
                    best_i = i
    return best_i


@njit(cache=True, nogil=True, fastmath=True)
def solve_path_euclidean(
    values, grid_h, grid_w, b_lo, b_hi, epsilon, start, uniforms, visited, forward, counters
):
    """Randomized greedy NN path under the mean squared Euclidean distance.

    Returns the path cost (sum of mean squared distances actually chosen).
    When the window holds no unvisited patch, the successor is the
    deterministic nearest neighbor over all unvisited patches.
    """
    count = forward.shape[0]
    n = values.shape[1]
    inv_n = 1.0 / n
    cost = 0.0
    cur = start
    visited[cur] = 1
    forward[0] = cur
    for t in range(1, count):
        r0 = cur % grid_h
        c0 = cur // grid_h
        c_lo = c0 - b_lo
        if c_lo < 0:
            c_lo = 0
        c_hi = c0 + b_hi
        if c_hi > grid_w - 1:
            c_hi = grid_w - 1
        r_lo = r0 - b_lo
        if r_lo < 0:
            r_lo = 0
        r_hi = r0 + b_hi
        if r_hi > grid_h - 1:
            r_hi = grid_h - 1
        xc = values[cur]
        best1 = _HUGE
        best2 = _HUGE
        i1 = np.int64(-1)
        i2 = np.int64(-1)
        for c in range(c_lo, c_hi + 1):
            base = c * grid_h
            for r in range(r_lo, r_hi + 1):
                i = base + r
                if visited[i]:
                    continue
                counters[EVALS_WINDOW] += 1
                s = _dist64(xc, values[i], n)
                # ascending scan order makes plain < break ties to lowest index
                if s < best1:
                    best2 = best1
                    i2 = i1
                    best1 = s
                    i1 = i
                elif s < best2:
                    best2 = s
                    i2 = i
        if i1 < 0:
            # window exhausted: exact nearest neighbor over everything left
            counters[FALLBACKS_GLOBAL] += 1
            best = _HUGE
            ib = np.int64(-1)
            for i in range(values.shape[0]):
                if visited[i]:
                    continue
                counters[EVALS_FALLBACK] += 1
                s = _dist64(xc, values[i], n)
                if s < best:
                    best = s
                    ib = i
            chosen = ib
            cost += best * inv_n
        elif i2 < 0:
            chosen = i1
            cost += best1 * inv_n
        else:
            w1 = best1 * inv_n
            w2 = best2 * inv_n
            p1 = 1.0 / (1.0 + np.exp(-(w2 - w1) / epsilon))
            if uniforms[t] < p1:
                chosen = i1
                cost += w1
            else:
                chosen = i2
                cost += w2
        visited[chosen] = 1
        forward[t] = chosen
        cur = chosen
    return cost


@njit(cache=True, nogil=True, parallel=True, fastmath=True)
def _global_euclidean(values, epsilon, start, uniforms, member, forward, counters):
    count = member.shape[0]
    n = values.shape[1]
    inv_n = 1.0 / n
    buf = np.empty((count, n), dtype=np.float32)
    idx = np.empty(count, dtype=np.int64)
    start_pos = 0
    for q in range(count):
        g = member[q]
        idx[q] = g
        for p in range(n):
            buf[q, p] = values[g, p]
        if g == start:
            start_pos = q
    xc = np.empty(n, dtype=np.float32)
    for p in range(n):
        xc[p] = buf[start_pos, p]
    size = count - 1
    for p in range(n):
        buf[start_pos, p] = buf[size, p]
    idx[start_pos] = idx[size]
    forward[0] = start
    cost = 0.0

    nt = get_num_threads()
    ps1 = np.empty(nt, dtype=np.float64)
    ps2 = np.empty(nt, dtype=np.float64)
    pi1 = np.empty(nt, dtype=np.int64)
    pi2 = np.empty(nt, dtype=np.int64)
    pq1 = np.empty(nt, dtype=np.int64)
    pq2 = np.empty(nt, dtype=np.int64)

    for t in range(1, count):
        counters[EVALS_WINDOW] += size
        best1 = _HUGE
        best2 = _HUGE
        i1 = np.int64(-1)
        i2 = np.int64(-1)
        pos1 = np.int64(-1)
        pos2 = np.int64(-1)
        if size < 4096 or nt == 1:
            for q in range(size):
                s = _dist64(xc, buf[q], n)
                iq = idx[q]
                # compacted order is arbitrary: break ties to lowest index
                if s < best1 or (s == best1 and iq < i1):
                    best2 = best1
                    i2 = i1
                    pos2 = pos1
                    best1 = s
                    i1 = iq
                    pos1 = q
                elif s < best2 or (s == best2 and iq < i2):
                    best2 = s
                    i2 = iq
                    pos2 = q
        else:
            block = (size + nt - 1) // nt
            for th in prange(nt):
                b1 = _HUGE
                b2 = _HUGE
                j1 = np.int64(-1)
                j2 = np.int64(-1)
                q1 = np.int64(-1)
                q2 = np.int64(-1)
                lo = th * block
                hi = lo + block
                if hi > size:
                    hi = size
                for q in range(lo, hi):
                    s = _dist64(xc, buf[q], n)
                    iq = idx[q]
                    if s < b1 or (s == b1 and iq < j1):
                        b2 = b1
                        j2 = j1
                        q2 = q1
                        b1 = s
                        j1 = iq
                        q1 = q
                    elif s < b2 or (s == b2 and iq < j2):
                        b2 = s
                        j2 = iq
                        q2 = q
                ps1[th] = b1
                pi1[th] = j1
                pq1[th] = q1
                ps2[th] = b2
                pi2[th] = j2
                pq2[th] = q2
            # the two smallest under the total order (distance, index) do not
            # depend on the block partition
            for th in range(nt):
                for which in range(2):
                    if which == 0:
                        s = ps1[th]
                        iq = pi1[th]
                        qq = pq1[th]
                    else:
                        s = ps2[th]
                        iq = pi2[th]
                        qq = pq2[th]
                    if iq < 0:
                        continue
                    if s < best1 or (s == best1 and iq < i1):
                        best2 = best1
                        i2 = i1
                        pos2 = pos1
                        best1 = s
                        i1 = iq
                        pos1 = qq
                    elif s < best2 or (s == best2 and iq < i2):
                        best2 = s
                        i2 = iq
                        pos2 = qq
        if i2 < 0:
            chosen_pos = pos1
            cost += best1 * inv_n
        else:
            w1 = best1 * inv_n
            w2 = best2 * inv_n
            p1 = 1.0 / (1.0 + np.exp(-(w2 - w1) / epsilon))
            if uniforms[t] < p1:
                chosen_pos = pos1
                cost += w1
            else:
                chosen_pos = pos2
                cost += w2
        forward[t] = idx[chosen_pos]
        for p in range(n):
            xc[p] = buf[chosen_pos, p]
        size -= 1
        for p in range(n):
            buf[chosen_pos, p] = buf[size, p]
        idx[chosen_pos] = idx[size]
    return cost


def solve_path_global_euclidean(values, epsilon, start, uniforms, member, forward, counters):
    with _PARALLEL_LOCK:
        return _global_euclidean(values, epsilon, start, uniforms, member, forward, counters)


@njit(cache=True, nogil=True, fastmath=True)
def solve_path_masked(
    values,
    visible,
    grid_h,
    grid_w,
    b_lo,
    b_hi,
    epsilon,
    start,
    uniforms,
    visited,
    forward,
    spatial_flag,
    counters,
):
    """Randomized greedy NN path under the masked mean squared distance.

    Candidates sharing no visible pixel with the current patch are skipped;
    when the window offers no comparable unvisited patch the successor is
    the spatially nearest unvisited patch (flagged, excluded from the cost).
    """
    count = forward.shape[0]
    n = values.shape[1]
    cost = 0.0
    cur = start
    visited[cur] = 1
    forward[0] = cur
    for t in range(1, count):
        r0 = cur % grid_h
        c0 = cur // grid_h
        c_lo = c0 - b_lo
        if c_lo < 0:
            c_lo = 0
        c_hi = c0 + b_hi
        if c_hi > grid_w - 1:
            c_hi = grid_w - 1
        r_lo = r0 - b_lo
        if r_lo < 0:
            r_lo = 0
        r_hi = r0 + b_hi
        if r_hi > grid_h - 1:
            r_hi = grid_h - 1
        xc = values[cur]
        vc = visible[cur]
        best1 = _HUGE
        best2 = _HUGE
        i1 = np.int64(-1)
        i2 = np.int64(-1)
        for c in range(c_lo, c_hi + 1):
            base = c * grid_h
            for r in range(r_lo, r_hi + 1):
                i = base + r
                if visited[i]:
                    continue
                counters[EVALS_WINDOW] += 1
                xi = values[i]
                vi = visible[i]
                s = 0.0
                m = 0
                for p in range(n):
                    both = vc[p] & vi[p]
                    d = (np.float64(xc[p]) - np.float64(xi[p])) * both
                    s += d * d
                    m += both
                if m == 0:
                    continue
                w = s / m
                if w < best1:
                    best2 = best1
                    i2 = i1
                    best1 = w
                    i1 = i
                elif w < best2:
                    best2 = w
                    i2 = i
        if i1 < 0:
            counters[FALLBACKS_SPATIAL] += 1
            chosen = _spatial_nearest(visited, grid_h, grid_w, r0, c0)
            spatial_flag[t] = 1
        elif i2 < 0:
            chosen = i1
            cost += best1
        else:
            p1 = 1.0 / (1.0 + np.exp(-(best2 - best1) / epsilon))
            if uniforms[t] < p1:
                chosen = i1
                cost += best1
            else:
                chosen = i2
                cost += best2
        visited[chosen] = 1
        forward[t] = chosen
        cur = chosen
    return cost
