"""Compiled inner loops for permutation enumeration and makespan evaluation.

These mirror :func:`optima.core.derive` exactly (same tie-breaking, same
earliest-start rule); ``tests/test_kernels.py`` cross-checks them.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def makespan(perm, lengths, conf, m):
    n = perm.shape[0]
    finish = np.zeros(m)
    ct = np.zeros(lengths.shape[0])
    for idx in range(n):
        j = perm[idx]
        k = 0
        st = finish[0]
        for q in range(1, m):
            if finish[q] < st:
                st = finish[q]
                k = q
        for t in range(idx):
            i = perm[t]
            if conf[j, i] and ct[i] > st:
                st = ct[i]
        ct[j] = st + lengths[j]
        finish[k] = ct[j]
    best = 0.0
    for q in range(m):
        if finish[q] > best:
            best = finish[q]
    return best


@njit(cache=True)
def _factorial(n):
    f = 1
    for i in range(2, n + 1):
        f *= i
    return f


@njit(cache=True)
def enumerate_permutations(lengths, conf, m, record):
    """Depth-first walk over all permutations in lexicographic order.

    Returns ``(best_makespan, best_perm, count, makespans)``; the first
    permutation reaching the minimum wins.  ``makespans`` holds every leaf's
    makespan in lexicographic order when ``record`` is set, else it is empty.
    """
    n = lengths.shape[0]
    total = _factorial(n)
    out = np.empty(total if record else 0)
    perm = np.zeros(n, np.int64)
    best_perm = np.arange(n)
    used = np.zeros(n, np.bool_)
    finish = np.zeros((n + 1, m))
    ct = np.zeros(n)
    nxt = np.zeros(n + 1, np.int64)
    best = np.inf
    count = 0
    d = 0
    while d >= 0:
        if d == n:
            ms = 0.0
            for q in range(m):
                if finish[n, q] > ms:
                    ms = finish[n, q]
            if record:
                out[count] = ms
            if ms < best:
                best = ms
                best_perm[:] = perm
            count += 1
            d -= 1
            if d >= 0:
                used[perm[d]] = False
            continue
        j = nxt[d]
        while j < n and used[j]:
            j += 1
        if j >= n:
            d -= 1
            if d >= 0:
                used[perm[d]] = False
            continue
        nxt[d] = j + 1
        k = 0
        st = finish[d, 0]
        for q in range(m):
            finish[d + 1, q] = finish[d, q]
            if finish[d, q] < st:
                st = finish[d, q]
                k = q
        for t in range(d):
            i = perm[t]
            if conf[j, i] and ct[i] > st:
                st = ct[i]
        ct[j] = st + lengths[j]
        finish[d + 1, k] = ct[j]
        perm[d] = j
        used[j] = True
        d += 1
        nxt[d] = 0
    return best, best_perm, count, out
