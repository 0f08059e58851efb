# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled depth-2 split tables for exact policy-tree search.

For each root feature the rows are inserted in feature order (and in
reverse order for the right-child table).  Per candidate second feature
the best one-level split is maintained incrementally: for every ordered
action pair (aL, aR) the quantity

    D(q) = sum over inserted rows left of slot q of (S[aL] - S[aR])

is the cumulative sum of a point-mass array over split slots, so a
segment tree storing (segment sum, best prefix sum) per action pair
supports point insertion in O(log n) and yields

    best one-level value = max over pairs of  max_q D(q) + tot[aR],

with the diagonal pairs (aL == aR) covering constant subtrees.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cnp.import_array()


cdef inline double dmax(double a, double b) nogil:
    return a if a > b else b


cdef inline void _insert(double* sums, double* mpref, int leaf_base, int t, int m2,
                         double* u) nogil:
    cdef int node = leaf_base + t
    cdef int base = node * m2
    cdef int lef, rig, ch
    for ch in range(m2):
        sums[base + ch] += u[ch]
        mpref[base + ch] = sums[base + ch]
    node >>= 1
    while node >= 1:
        base = node * m2
        lef = (node << 1) * m2
        rig = lef + m2
        for ch in range(m2):
            sums[base + ch] = sums[lef + ch] + sums[rig + ch]
            mpref[base + ch] = dmax(mpref[lef + ch], sums[lef + ch] + mpref[rig + ch])
        node >>= 1


def build_depth2_tables(double[:, ::1] scores, int[:, ::1] grp,
                        int[::1] n_groups, int[:, ::1] order):
    cdef Py_ssize_t n = scores.shape[0]
    cdef int m = <int> scores.shape[1]
    cdef int d = <int> grp.shape[0]
    cdef int m2 = m * m

    cdef cnp.ndarray[cnp.float64_t, ndim=2] bestL = np.zeros((d, n + 1), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bestR = np.zeros((d, n + 1), dtype=np.float64)
    cdef double[:, ::1] bl = bestL
    cdef double[:, ::1] br = bestR

    # Per-feature slot counts and padded tree sizes.
    cdef int* P = <int*> malloc(d * sizeof(int))
    cdef int* L = <int*> malloc(d * sizeof(int))
    cdef long* off = <long*> malloc(d * sizeof(long))
    cdef long total = 0
    cdef int c, sz
    for c in range(d):
        P[c] = n_groups[c] - 1
        sz = 1
        while sz < (P[c] if P[c] > 0 else 1):
            sz <<= 1
        L[c] = sz
        off[c] = total
        if P[c] > 0:
            total += 2 * <long> sz * m2

    cdef double* sums = <double*> malloc(total * sizeof(double) if total > 0 else sizeof(double))
    cdef double* mpref = <double*> malloc(total * sizeof(double) if total > 0 else sizeof(double))
    cdef double* tot = <double*> malloc(m * sizeof(double))
    cdef double* u = <double*> malloc(m2 * sizeof(double))
    if sums == NULL or mpref == NULL or tot == NULL or u == NULL or P == NULL or L == NULL or off == NULL:
        raise MemoryError()

    cdef int j, direction, aL, aR, t
    cdef Py_ssize_t s, step
    cdef int i
    cdef double q, cand
    cdef long base

    with nogil:
        for j in range(d):
            for direction in range(2):
                if total > 0:
                    memset(sums, 0, total * sizeof(double))
                    memset(mpref, 0, total * sizeof(double))
                memset(tot, 0, m * sizeof(double))
                for step in range(n):
                    s = step if direction == 0 else n - 1 - step
                    i = order[j, s]
                    for aL in range(m):
                        for aR in range(m):
                            u[aL * m + aR] = scores[i, aL] - scores[i, aR]
                        tot[aL] += scores[i, aL]
                    for c in range(d):
                        if P[c] > 0:
                            t = grp[c, i]
                            if t <= P[c] - 1:
                                _insert(sums + off[c], mpref + off[c], L[c], t, m2, u)
                    # Best one-level value over the inserted set.
                    q = tot[0]
                    for aL in range(1, m):
                        q = dmax(q, tot[aL])
                    for c in range(d):
                        if P[c] > 0:
                            base = off[c] + m2  # root node index 1
                            for aL in range(m):
                                for aR in range(m):
                                    cand = mpref[base + aL * m + aR] + tot[aR]
                                    if cand > q:
                                        q = cand
                    if direction == 0:
                        bl[j, s + 1] = q
                    else:
                        br[j, s] = q

    free(P)
    free(L)
    free(off)
    free(sums)
    free(mpref)
    free(tot)
    free(u)
    return bestL, bestR
