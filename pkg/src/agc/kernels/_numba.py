"""numba-compiled kernels.  Each function mirrors one in ``_numpy`` exactly."""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _splitmix(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True)
def greedy_applications(lhs, counts, enabled, seed):
    n_rules, n_sym = lhs.shape
    res = counts.copy()
    apps = np.zeros(n_rules, dtype=np.int64)
    cand = np.empty(n_rules, dtype=np.int64)
    live = np.zeros(n_rules, dtype=np.bool_)
    for r in range(n_rules):
        if enabled[r]:
            for s in range(n_sym):
                if lhs[r, s] > 0:
                    live[r] = True
                    break
    state = np.uint64(seed)
    while True:
        k = 0
        for r in range(n_rules):
            if not live[r]:
                continue
            fits = True
            for s in range(n_sym):
                if lhs[r, s] > res[s]:
                    fits = False
                    break
            if fits:
                cand[k] = r
                k += 1
        if k == 0:
            break
        if k == 1:
            r = cand[0]
            times = np.int64(-1)
            for s in range(n_sym):
                if lhs[r, s] > 0:
                    t = res[s] // lhs[r, s]
                    if times < 0 or t < times:
                        times = t
            apps[r] += times
            for s in range(n_sym):
                res[s] -= times * lhs[r, s]
            continue
        state, x = _splitmix(state)
        r = cand[np.int64(x % np.uint64(k))]
        apps[r] += 1
        for s in range(n_sym):
            res[s] -= lhs[r, s]
    return apps


@njit(cache=True)
def _row_less(sig, a, b):
    for j in range(sig.shape[1]):
        if sig[a, j] != sig[b, j]:
            return sig[a, j] < sig[b, j]
    return False


@njit(cache=True)
def _row_equal(sig, a, b):
    for j in range(sig.shape[1]):
        if sig[a, j] != sig[b, j]:
            return False
    return True


@njit(cache=True)
def refine_partition(colors, indptr, nbr, wcls):
    n = colors.shape[0]
    cur = colors.copy()
    maxdeg = 0
    for v in range(n):
        d = indptr[v + 1] - indptr[v]
        if d > maxdeg:
            maxdeg = d
    width = 1 + maxdeg
    sig = np.empty((n, width), dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    ncol = -1
    while True:
        sig[:, :] = -1
        for v in range(n):
            sig[v, 0] = cur[v]
            lo = indptr[v]
            d = indptr[v + 1] - lo
            for j in range(d):
                sig[v, 1 + j] = wcls[lo + j] * (n + 1) + cur[nbr[lo + j]]
            if d > 1:
                sig[v, 1:1 + d] = np.sort(sig[v, 1:1 + d])
        for v in range(n):
            order[v] = v
        # insertion sort keeps this allocation-free for small graphs
        for i in range(1, n):
            x = order[i]
            j = i - 1
            while j >= 0 and _row_less(sig, x, order[j]):
                order[j + 1] = order[j]
                j -= 1
            order[j + 1] = x
        new = np.empty(n, dtype=np.int64)
        rank = 0
        new[order[0]] = 0
        for i in range(1, n):
            if not _row_equal(sig, order[i], order[i - 1]):
                rank += 1
            new[order[i]] = rank
        cur = new
        if rank + 1 == ncol:
            break
        ncol = rank + 1
    return cur


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def component_labels(n, src, dst):
    parent = np.arange(n)
    for e in range(src.shape[0]):
        a = _find(parent, src[e])
        b = _find(parent, dst[e])
        if a < b:
            parent[b] = a
        elif b < a:
            parent[a] = b
    labels = np.empty(n, dtype=np.int64)
    root_label = -np.ones(n, dtype=np.int64)
    k = 0
    for v in range(n):
        r = _find(parent, v)
        if root_label[r] < 0:
            root_label[r] = k
            k += 1
        labels[v] = root_label[r]
    return labels
