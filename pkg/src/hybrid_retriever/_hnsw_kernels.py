"""Compiled kernels for the HNSW base layer over dense float32 vectors.

The base layer dominates both construction and search cost, so its beam
search, diversity-based neighbor selection and reverse-edge trimming are
JIT-compiled. All loops are scalar float32 with a fixed evaluation order,
so results are deterministic for a given input. Distance codes: 0 squared
L2, 1 negated inner product, 2 negated cosine.

Heaps order entries by (distance, id) so exact ties resolve toward the
lower id, matching the pure-Python engine used for sparse/composite spaces.
"""

from __future__ import annotations

import numpy as np
from numba import njit

KIND_L2 = 0
KIND_IP = 1
KIND_COS = 2


@njit(cache=True, inline="always")
def _dist_rowvec(matrix, norms, i, q, qnorm, kind):
    d = 0.0
    if kind == KIND_L2:
        for c in range(q.shape[0]):
            t = matrix[i, c] - q[c]
            d += t * t
        return d
    for c in range(q.shape[0]):
        d += matrix[i, c] * q[c]
    if kind == KIND_COS:
        denom = norms[i] * qnorm
        if denom == 0.0:
            return 0.0
        return -(d / denom)
    return -d


@njit(cache=True, inline="always")
def _dist_pair(matrix, norms, i, j, kind):
    return _dist_rowvec(matrix, norms, i, matrix[j], norms[j], kind)


@njit(cache=True, inline="always")
def _heap_less(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True)
def _minheap_push(hd, hi, n, d, i):
    hd[n] = d
    hi[n] = i
    child = n
    while child > 0:
        parent = (child - 1) >> 1
        if _heap_less(hd[child], hi[child], hd[parent], hi[parent]):
            hd[child], hd[parent] = hd[parent], hd[child]
            hi[child], hi[parent] = hi[parent], hi[child]
            child = parent
        else:
            break
    return n + 1


@njit(cache=True)
def _minheap_pop(hd, hi, n):
    d, i = hd[0], hi[0]
    n -= 1
    hd[0], hi[0] = hd[n], hi[n]
    parent = 0
    while True:
        left = 2 * parent + 1
        if left >= n:
            break
        right = left + 1
        best = left
        if right < n and _heap_less(hd[right], hi[right], hd[left], hi[left]):
            best = right
        if _heap_less(hd[best], hi[best], hd[parent], hi[parent]):
            hd[parent], hd[best] = hd[best], hd[parent]
            hi[parent], hi[best] = hi[best], hi[parent]
            parent = best
        else:
            break
    return d, i, n


@njit(cache=True, inline="always")
def _maxheap_less(d1, i1, d2, i2):
    # inverted comparison: the "smallest" element of the max-heap is the
    # worst hit, i.e. the largest (distance, id)
    return d1 > d2 or (d1 == d2 and i1 > i2)


@njit(cache=True)
def _maxheap_push(hd, hi, n, d, i):
    hd[n] = d
    hi[n] = i
    child = n
    while child > 0:
        parent = (child - 1) >> 1
        if _maxheap_less(hd[child], hi[child], hd[parent], hi[parent]):
            hd[child], hd[parent] = hd[parent], hd[child]
            hi[child], hi[parent] = hi[parent], hi[child]
            child = parent
        else:
            break
    return n + 1


@njit(cache=True)
def _maxheap_pop(hd, hi, n):
    d, i = hd[0], hi[0]
    n -= 1
    hd[0], hi[0] = hd[n], hi[n]
    parent = 0
    while True:
        left = 2 * parent + 1
        if left >= n:
            break
        right = left + 1
        best = left
        if right < n and _maxheap_less(hd[right], hi[right], hd[left], hi[left]):
            best = right
        if _maxheap_less(hd[best], hi[best], hd[parent], hi[parent]):
            hd[parent], hd[best] = hd[best], hd[parent]
            hi[parent], hi[best] = hi[best], hi[parent]
            parent = best
        else:
            break
    return d, i, n


@njit(cache=True)
def beam_search_l0(matrix, norms, links, counts, stamps, stamp, eps, q, ef, kind):
    """Beam search on the base layer; returns (dists, ids) sorted ascending
    by (distance, id)."""
    qnorm = 0.0
    for c in range(q.shape[0]):
        qnorm += q[c] * q[c]
    qnorm = np.sqrt(qnorm)

    n_nodes = counts.shape[0]
    cand_d = np.empty(n_nodes + 1, np.float64)
    cand_i = np.empty(n_nodes + 1, np.int64)
    best_d = np.empty(ef + 1, np.float64)
    best_i = np.empty(ef + 1, np.int64)
    n_cand = 0
    n_best = 0

    for e in range(eps.shape[0]):
        ep = eps[e]
        if stamps[ep] == stamp:
            continue
        stamps[ep] = stamp
        d = _dist_rowvec(matrix, norms, ep, q, qnorm, kind)
        n_cand = _minheap_push(cand_d, cand_i, n_cand, d, ep)
        n_best = _maxheap_push(best_d, best_i, n_best, d, ep)

    while n_cand > 0:
        d, node, n_cand = _minheap_pop(cand_d, cand_i, n_cand)
        if n_best >= ef and d > best_d[0]:
            break
        deg = counts[node]
        for s in range(deg):
            nb = links[node, s]
            if stamps[nb] == stamp:
                continue
            stamps[nb] = stamp
            dn = _dist_rowvec(matrix, norms, nb, q, qnorm, kind)
            if n_best < ef:
                n_cand = _minheap_push(cand_d, cand_i, n_cand, dn, nb)
                n_best = _maxheap_push(best_d, best_i, n_best, dn, nb)
            elif _heap_less(dn, nb, best_d[0], best_i[0]):
                n_cand = _minheap_push(cand_d, cand_i, n_cand, dn, nb)
                n_best = _maxheap_push(best_d, best_i, n_best, dn, nb)
                _, _, n_best = _maxheap_pop(best_d, best_i, n_best)

    out_d = np.empty(n_best, np.float64)
    out_i = np.empty(n_best, np.int64)
    k = n_best
    while k > 0:
        d, i, k = _maxheap_pop(best_d, best_i, k)
        out_d[k] = d
        out_i[k] = i
    return out_d, out_i


@njit(cache=True)
def select_diverse(matrix, norms, cand_dists, cand_ids, m, kind):
    """Greedy diversity pruning with nearest-first backfill.

    A candidate survives only if it is closer to the base point than to
    every neighbor kept so far; candidates must arrive best-first.
    """
    n = cand_ids.shape[0]
    kept = np.empty(n if n < m else m, np.int64)
    pruned = np.empty(n, np.int64)
    n_kept = 0
    n_pruned = 0
    for ci in range(n):
        if n_kept >= m:
            break
        d = cand_dists[ci]
        cid = cand_ids[ci]
        ok = True
        for kj in range(n_kept):
            if _dist_pair(matrix, norms, cid, kept[kj], kind) <= d:
                ok = False
                break
        if ok:
            kept[n_kept] = cid
            n_kept += 1
        else:
            pruned[n_pruned] = cid
            n_pruned += 1
    for pi in range(n_pruned):
        if n_kept >= m:
            break
        kept[n_kept] = pruned[pi]
        n_kept += 1
    return kept[:n_kept]


@njit(cache=True)
def connect_new_node(matrix, norms, links, counts, new_id, chosen, cap, kind):
    """Add reverse edges new_id <- chosen, re-pruning any list that overflows."""
    scratch_d = np.empty(cap + 1, np.float64)
    scratch_i = np.empty(cap + 1, np.int64)
    for idx in range(chosen.shape[0]):
        nb = chosen[idx]
        c = counts[nb]
        if c < cap:
            links[nb, c] = new_id
            counts[nb] = c + 1
            continue
        # candidate set: existing links plus the new node, sorted by
        # (distance to nb, id) with a stable insertion sort
        for s in range(c):
            scratch_i[s] = links[nb, s]
            scratch_d[s] = _dist_pair(matrix, norms, nb, links[nb, s], kind)
        scratch_i[c] = new_id
        scratch_d[c] = _dist_pair(matrix, norms, nb, new_id, kind)
        for a in range(1, c + 1):
            d = scratch_d[a]
            i = scratch_i[a]
            b = a - 1
            while b >= 0 and _heap_less(d, i, scratch_d[b], scratch_i[b]):
                scratch_d[b + 1] = scratch_d[b]
                scratch_i[b + 1] = scratch_i[b]
                b -= 1
            scratch_d[b + 1] = d
            scratch_i[b + 1] = i
        kept = select_diverse(matrix, norms, scratch_d[: c + 1],
                              scratch_i[: c + 1], cap, kind)
        for s in range(kept.shape[0]):
            links[nb, s] = kept[s]
        counts[nb] = kept.shape[0]
