"""Exact search over depth-limited axis-aligned policy trees.

Maximizes the mean assigned score (1/n) sum_i S[i, tree(x_i)] over all
trees of depth at most D with thresholds at midpoints between
consecutive distinct observed values.  Depth 0 and 1 are solved by
direct sweeps; depth 2 scans every root split using precomputed
best-left/best-right one-level tables from the core backend (compiled
when available, numpy fallback otherwise).

Determinism: candidates are scanned in (feature, threshold, action)
order and only strictly better values replace the incumbent, so ties
resolve to the lexicographically first candidate and a constant tree is
preferred over an equal-valued split.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ._core import get_backend
from .trees import Leaf, PolicyTree, Split

__all__ = ["search_policy_tree", "policy_value_from_scores"]

MAX_DEPTH = 2


def policy_value_from_scores(scores: np.ndarray, actions: np.ndarray) -> float:
    """Canonical value of an action assignment: mean of the picked scores."""
    scores = np.asarray(scores, dtype=np.float64)
    return float(scores[np.arange(len(scores)), np.asarray(actions, dtype=np.int64)].mean())


def _validate(scores, x):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    if scores.ndim != 2 or len(scores) == 0:
        raise ValueError("scores must be a non-empty (n, M) matrix")
    if len(x) != len(scores):
        raise ValueError("scores and covariates must have matching length")
    if not np.all(np.isfinite(scores)) or not np.all(np.isfinite(x)):
        raise ValueError("non-finite scores or covariates")
    return scores, x


def _feature_layout(x):
    """Per-feature stable sort order, group ids of sorted distinct values."""
    n, d = x.shape
    order = np.empty((d, n), dtype=np.int32)
    grp = np.empty((d, n), dtype=np.int32)
    n_groups = np.empty(d, dtype=np.int32)
    for c in range(d):
        uniq, inverse = np.unique(x[:, c], return_inverse=True)
        grp[c] = inverse.astype(np.int32)
        order[c] = np.argsort(x[:, c], kind="stable").astype(np.int32)
        n_groups[c] = len(uniq)
    return order, grp, n_groups


def _best_constant(scores) -> Tuple[Leaf, float]:
    col = scores.sum(axis=0)
    a = int(np.argmax(col))  # first max: lowest action wins ties
    return Leaf(a), float(col[a])


def _solve_depth1(scores, x, idx) -> Tuple[object, float]:
    """Exact depth<=1 subtree for the rows in ``idx`` (sum-scale value)."""
    sub = scores[idx]
    leaf, best = _best_constant(sub)
    node = leaf
    tot = sub.sum(axis=0)
    for c in range(x.shape[1]):
        v = x[idx, c]
        o = np.argsort(v, kind="stable")
        sv = v[o]
        boundary = np.nonzero(sv[:-1] < sv[1:])[0]
        if len(boundary) == 0:
            continue
        cs = np.cumsum(sub[o], axis=0)
        left = cs[boundary]
        right = tot - left
        vals = left.max(axis=1) + right.max(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            p = boundary[k]
            node = Split(
                c,
                float((sv[p] + sv[p + 1]) / 2.0),
                Leaf(int(np.argmax(left[k]))),
                Leaf(int(np.argmax(right[k]))),
            )
    return node, best


def search_policy_tree(
    scores: np.ndarray,
    covariates: np.ndarray,
    depth: int,
    backend: Optional[str] = None,
) -> Tuple[PolicyTree, float]:
    """Exhaustive policy-tree search; returns the tree and its mean score."""
    if depth not in (0, 1, 2):
        raise ValueError(f"unsupported depth: {depth} (combinatorial cost caps D at {MAX_DEPTH})")
    scores, x = _validate(scores, covariates)
    n = len(scores)

    if depth == 0:
        leaf, _ = _best_constant(scores)
        tree = PolicyTree(leaf)
        return tree, policy_value_from_scores(scores, tree.predict(x))

    if depth == 1:
        node, _ = _solve_depth1(scores, x, np.arange(n))
        tree = PolicyTree(node)
        return tree, policy_value_from_scores(scores, tree.predict(x))

    order, grp, n_groups = _feature_layout(x)
    impl, _ = get_backend(backend)
    bestL, bestR = impl.build_depth2_tables(scores, grp, n_groups, order)

    leaf, best = _best_constant(scores)
    root_choice = None
    # Slack absorbs backend-dependent summation-order noise in the tables,
    # so exact ties resolve to the same (simpler, earlier) candidate on
    # every backend; genuine gaps in non-degenerate score matrices are
    # many orders of magnitude larger.
    def slack(v):
        return 1e-8 * (1.0 + abs(v))

    for j in range(x.shape[1]):
        if n_groups[j] < 2:
            continue
        sv = x[order[j], j]
        positions = np.nonzero(sv[:-1] < sv[1:])[0] + 1  # left counts
        vals = bestL[j, positions] + bestR[j, positions]
        peak = float(vals.max())
        k = int(np.argmax(vals >= peak - slack(peak)))  # first of the tied peaks
        if vals[k] > best + slack(best):
            best = float(vals[k])
            root_choice = (j, int(positions[k]))

    if root_choice is None:
        tree = PolicyTree(leaf)
        return tree, policy_value_from_scores(scores, tree.predict(x))

    j, p = root_choice
    left_idx = order[j, :p].astype(np.int64)
    right_idx = order[j, p:].astype(np.int64)
    sv = x[order[j], j]
    threshold = float((sv[p - 1] + sv[p]) / 2.0)
    left_node, _ = _solve_depth1(scores, x, left_idx)
    right_node, _ = _solve_depth1(scores, x, right_idx)
    tree = PolicyTree(Split(j, threshold, left_node, right_node))
    return tree, policy_value_from_scores(scores, tree.predict(x))
