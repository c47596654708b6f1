"""Interpreter fallbacks for the compiled kernels.

Results are bit-identical to ``_numba``; the test-suite checks both.
"""

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def greedy_applications(lhs, counts, enabled, seed):
    lhs = np.asarray(lhs, dtype=np.int64)
    n_rules = lhs.shape[0]
    rows = [
        [(s, int(q)) for s, q in enumerate(lhs[r]) if q > 0]
        for r in range(n_rules)
    ]
    live = [r for r in range(n_rules) if enabled[r] and rows[r]]
    res = [int(c) for c in counts]
    apps = [0] * n_rules
    state = int(seed) & _MASK
    while True:
        cand = [r for r in live if all(res[s] >= q for s, q in rows[r])]
        if not cand:
            break
        if len(cand) == 1:
            r = cand[0]
            times = min(res[s] // q for s, q in rows[r])
            apps[r] += times
            for s, q in rows[r]:
                res[s] -= times * q
            continue
        state, x = _splitmix(state)
        r = cand[x % len(cand)]
        apps[r] += 1
        for s, q in rows[r]:
            res[s] -= q
    return np.array(apps, dtype=np.int64)


def refine_partition(colors, indptr, nbr, wcls):
    n = len(colors)
    cur = [int(c) for c in colors]
    adj = [
        [(int(wcls[j]), int(nbr[j])) for j in range(indptr[v], indptr[v + 1])]
        for v in range(n)
    ]
    ncol = -1
    while True:
        sigs = [
            (cur[v],) + tuple(sorted(w * (n + 1) + cur[u] for w, u in adj[v]))
            for v in range(n)
        ]
        ranks = {s: i for i, s in enumerate(sorted(set(sigs)))}
        cur = [ranks[s] for s in sigs]
        if len(ranks) == ncol:
            break
        ncol = len(ranks)
    return np.array(cur, dtype=np.int64)


def component_labels(n, src, dst):
    lab = np.arange(n, dtype=np.int64)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if src.size:
        while True:
            low = np.minimum(lab[src], lab[dst])
            new = lab.copy()
            np.minimum.at(new, src, low)
            np.minimum.at(new, dst, low)
            new = new[new]
            if np.array_equal(new, lab):
                break
            lab = new
    # component ids ordered by smallest member
    _, first = np.unique(lab, return_index=True)
    order = np.empty(n, dtype=np.int64)
    order[lab[np.sort(first)]] = np.arange(len(first))
    return order[lab]
