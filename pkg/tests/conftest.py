"""Shared fixtures and independent oracles for the test suite.

The brute-force enumerators here are deliberately naive (loop over every
candidate) so they stay independent of the production search path.
"""

import numpy as np
import pytest

from driftdro import Dataset, PolicyTree
from driftdro.trees import Leaf, Split
from driftdro.treesearch import policy_value_from_scores


def make_bernoulli_dataset(n, seed, p=0.5, n_actions=3, dim=3, nonuniform=False):
    """All-arm Bernoulli(p) rewards, covariates irrelevant to the outcome.

    ``nonuniform`` switches the behavior policy to a region-dependent
    (0.5, 0.25, 0.25) rule keyed on which random hyperplane score is
    largest, while the reward law stays identical across arms.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(n, dim))
    if nonuniform:
        planes = np.linspace(1.0, 2.0, n_actions * dim).reshape(n_actions, dim)
        planes[1:, 0] *= -1.0
        favored = np.argmax(x @ planes.T, axis=1)
        probs = np.full((n, n_actions), 0.5 / (n_actions - 1))
        probs[np.arange(n), favored] = 0.5
    else:
        probs = np.full((n, n_actions), 1.0 / n_actions)
    u = rng.random(n)
    actions = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)
    rewards = (rng.random(n) < p).astype(np.float64)
    return Dataset(x, actions, rewards, n_actions)


def nonuniform_behavior_probs(x, n_actions=3):
    """The matrix of true propensities used by ``nonuniform`` datasets."""
    x = np.atleast_2d(x)
    dim = x.shape[1]
    planes = np.linspace(1.0, 2.0, n_actions * dim).reshape(n_actions, dim)
    planes[1:, 0] *= -1.0
    favored = np.argmax(x @ planes.T, axis=1)
    probs = np.full((len(x), n_actions), 0.5 / (n_actions - 1))
    probs[np.arange(len(x)), favored] = 0.5
    return probs


def gaussian_worst_mean(mu, sigma, delta):
    """Closed-form KL worst-case mean of a Normal law: mu - sigma*sqrt(2 delta)."""
    return mu - sigma * np.sqrt(2.0 * delta)


def all_depth1_trees(x, n_actions):
    """Every depth<=1 tree over observed-midpoint thresholds."""
    n, d = x.shape
    trees = [PolicyTree(Leaf(a)) for a in range(n_actions)]
    for j in range(d):
        vals = np.unique(x[:, j])
        for t in (vals[:-1] + vals[1:]) / 2.0:
            for a_left in range(n_actions):
                for a_right in range(n_actions):
                    trees.append(PolicyTree(Split(j, float(t), Leaf(a_left), Leaf(a_right))))
    return trees


def brute_force_depth1(scores, x):
    """Exhaustive best depth<=1 tree by canonical mean value."""
    best_val, best_tree = -np.inf, None
    for tree in all_depth1_trees(x, scores.shape[1]):
        v = policy_value_from_scores(scores, tree.predict(x))
        if v > best_val:
            best_val, best_tree = v, tree
    return best_tree, best_val


def brute_force_depth2(scores, x):
    """Exhaustive best depth<=2 tree (root split + exhaustive children)."""
    n, m = scores.shape
    best_tree, best_val = brute_force_depth1(scores, x)
    for j in range(x.shape[1]):
        vals = np.unique(x[:, j])
        for t in (vals[:-1] + vals[1:]) / 2.0:
            left = x[:, j] <= t
            lt, _ = brute_force_depth1(scores[left], x[left])
            rt, _ = brute_force_depth1(scores[~left], x[~left])
            tree = PolicyTree(Split(j, float(t), lt.root, rt.root))
            v = policy_value_from_scores(scores, tree.predict(x))
            if v > best_val:
                best_val, best_tree = v, tree
    return best_tree, best_val


def greedy_depth2(scores, x):
    """Greedy top-down heuristic: best immediate split, then refine children."""
    n, m = scores.shape
    col = scores.mean(axis=0)
    best_val = col.max()
    best_tree = PolicyTree(Leaf(int(np.argmax(col))))
    best_split = None
    for j in range(x.shape[1]):
        vals = np.unique(x[:, j])
        for t in (vals[:-1] + vals[1:]) / 2.0:
            left = x[:, j] <= t
            aL = int(np.argmax(scores[left].sum(axis=0)))
            aR = int(np.argmax(scores[~left].sum(axis=0)))
            acts = np.where(left, aL, aR)
            v = policy_value_from_scores(scores, acts)
            if v > best_val:
                best_val = v
                best_split = (j, float(t))
    if best_split is None:
        return best_tree, best_val
    j, t = best_split
    left = x[:, j] <= t
    lt, _ = brute_force_depth1(scores[left], x[left])
    rt, _ = brute_force_depth1(scores[~left], x[~left])
    tree = PolicyTree(Split(j, t, lt.root, rt.root))
    return tree, policy_value_from_scores(scores, tree.predict(x))


def random_trees(x, n_actions, count, seed, depth=2):
    """Random trees from the depth<=2 class for search-dominance checks."""
    rng = np.random.default_rng(seed)
    n, d = x.shape
    out = []

    def random_node(level):
        if level == depth or rng.random() < 0.3:
            return Leaf(int(rng.integers(n_actions)))
        j = int(rng.integers(d))
        t = float(rng.uniform(x[:, j].min(), x[:, j].max()))
        return Split(j, t, random_node(level + 1), random_node(level + 1))

    for _ in range(count):
        out.append(PolicyTree(random_node(0)))
    return out


@pytest.fixture(scope="session")
def bernoulli_dataset_20k():
    return make_bernoulli_dataset(20000, seed=101)
