"""Pure-numpy fallback for the depth-2 split tables.

Same contract as the compiled kernel: for every root feature j and
left-count p, the best depth<=1 subtree value (sum scale) over the first
p rows in j-order (bestL) and over the remaining rows (bestR).  The
fallback re-solves each one-level subproblem per candidate with cumsum
sweeps, which is O(d^2 n^2) rather than the compiled O(d^2 n log n M^2);
results are interchangeable.
"""

import numpy as np


def build_depth2_tables(scores, grp, n_groups, order):
    scores = np.asarray(scores, dtype=np.float64)
    n, m = scores.shape
    d = grp.shape[0]
    bestL = np.zeros((d, n + 1))
    bestR = np.zeros((d, n + 1))
    rank = np.empty_like(order)
    for c in range(d):
        rank[c, order[c]] = np.arange(n, dtype=order.dtype)
    scores_sorted = [scores[order[c]] for c in range(d)]
    grp_sorted = [grp[c, order[c]] for c in range(d)]

    for j in range(d):
        for direction in (0, 1):
            member = np.zeros((d, n), dtype=bool)
            tot = np.zeros(m)
            seq = range(n) if direction == 0 else range(n - 1, -1, -1)
            for s in seq:
                i = order[j, s]
                tot += scores[i]
                for c in range(d):
                    member[c, rank[c, i]] = True
                best = tot.max()
                for c in range(d):
                    sel = member[c]
                    g = grp_sorted[c][sel]
                    if len(g) < 2:
                        continue
                    boundary = np.nonzero(g[:-1] != g[1:])[0]
                    if len(boundary) == 0:
                        continue
                    cs = np.cumsum(scores_sorted[c][sel], axis=0)
                    left = cs[boundary]
                    v = (left.max(axis=1) + (tot - left).max(axis=1)).max()
                    if v > best:
                        best = v
                if direction == 0:
                    bestL[j, s + 1] = best
                else:
                    bestR[j, s] = best
    return bestL, bestR
