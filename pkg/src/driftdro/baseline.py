"""Joint-distribution-shift comparator: worst case over a KL ball around
the joint law of (X, Y), with self-normalized inverse-propensity weights.

The scalar dual of the joint worst case is one-dimensional,

    value = max_{alpha >= floor}  -alpha * log( sum_i w_i e^{-y_i/alpha} / sum_i w_i )
            - alpha * delta,

solved by golden section over log alpha.  Policy search maximizes this
value over the same depth-limited tree class as the main learner.  The
objective is a ratio of policy-linear sums for fixed alpha, so for each
alpha on a grid the optimal tree is found exactly via Dinkelbach
fractional programming (each iteration is one additive exact tree
search), which is equivalent to enumerating the class; the winning
tree's alpha is then re-optimized exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import Dataset
from .dual import DEFAULT_ALPHA_FLOOR, _golden_min
from .estimator import _PROPENSITY_TAG
from .learner import LearnerConfig
from .nuisance import derive_seed, fit_propensity
from .treesearch import search_policy_tree
from .trees import PolicyTree, constant_policy

__all__ = ["JointDualValue", "BaselineConfig", "joint_dro_value", "learn_joint_dro"]


@dataclass(frozen=True)
class JointDualValue:
    alpha_star: float
    value: float


def joint_dro_value(ys, weights, delta: float, alpha_floor: float = DEFAULT_ALPHA_FLOOR) -> JointDualValue:
    """Scalar-dual worst-case mean of a weighted sample over a joint KL ball."""
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim != 1 or len(ys) == 0:
        raise ValueError("ys must be a non-empty vector")
    if not np.all(np.isfinite(ys)):
        raise ValueError("non-finite operand: ys")
    if weights is None:
        w = np.full(len(ys), 1.0 / len(ys))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != ys.shape or np.any(w < 0):
            raise ValueError("weights must be non-negative and match ys")
        tot = w.sum()
        if not tot > 0:
            raise ValueError("weights must have positive sum")
        w = w / tot
    delta = float(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")

    if delta == 0.0:
        # Supremum approached as alpha -> infinity, where the dual value
        # tends to the weighted mean.
        return JointDualValue(math.inf, float(w @ ys))

    lo = ys.min()

    def neg_value(log_alpha):
        alpha = math.exp(log_alpha)
        lme = -lo / alpha + math.log(w @ np.exp(-(ys - lo) / alpha))
        return alpha * lme + alpha * delta

    hi_alpha = 10.0 * float(ys.max() - ys.min()) + 1.0
    hi_alpha = max(hi_alpha, 2.0 * alpha_floor)
    s_star, neg = _golden_min(neg_value, math.log(alpha_floor), math.log(hi_alpha))
    alpha_star = max(math.exp(s_star), alpha_floor)
    return JointDualValue(alpha_star, -neg)


@dataclass(frozen=True)
class BaselineConfig(LearnerConfig):
    alpha_grid_size: int = 8
    dinkelbach_max_iter: int = 12


def _sn_ratio(exp_scaled, base_w, actions, data_actions):
    match = data_actions == actions
    d = float(base_w[match].sum())
    if d <= 0:
        return None
    n = float((base_w * exp_scaled)[match].sum())
    return n / d


def _tree_joint_value(tree, data, base_w, delta, alpha_floor):
    actions = tree.predict(data.x)
    match = data.action == actions
    if not np.any(match):
        return JointDualValue(alpha_floor, -math.inf)
    return joint_dro_value(data.reward[match], base_w[match], delta, alpha_floor)


def learn_joint_dro(
    data: Dataset,
    delta: float,
    depth: int = 2,
    cfg: Optional[BaselineConfig] = None,
) -> PolicyTree:
    """Tree maximizing the self-normalized joint-dual worst-case value."""
    cfg = cfg or BaselineConfig()
    delta = float(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")

    prop = fit_propensity(
        data, cfg.nuisance, seed=derive_seed(cfg.seed, _PROPENSITY_TAG, _PROPENSITY_TAG)
    )
    probs = prop.predict_matrix(data.x)
    base_w = 1.0 / probs[np.arange(data.n), data.action]
    floor = cfg.nuisance.solver.alpha_floor

    # Constant policies seed both the alpha grid and the incumbent.
    best_tree = None
    best = JointDualValue(floor, -math.inf)
    for a in range(data.n_actions):
        cand = constant_policy(a)
        jv = _tree_joint_value(cand, data, base_w, delta, floor)
        if jv.value > best.value:
            best_tree, best = cand, jv

    y_range = float(data.reward.max() - data.reward.min())
    y_min = float(data.reward.min())
    hi = 10.0 * y_range + 1.0
    center = best.alpha_star if math.isfinite(best.alpha_star) else hi
    # Wide deterministic grid (floor scale up to the golden-section cap)
    # plus extra resolution around the best constant policy's optimum.
    grid = np.unique(np.concatenate([
        np.geomspace(max(2.0 * floor, 1e-3 * hi), hi, cfg.alpha_grid_size),
        np.geomspace(max(2.0 * floor, center / 4.0), min(hi, center * 4.0), 4),
    ]))

    if delta == 0.0:
        # No ball: the objective is the self-normalized mean, which is a
        # single Dinkelbach problem (e^{-y/alpha} replaced by -y).
        grid = np.array([math.inf])

    for alpha in grid:
        if math.isinf(alpha):
            exp_scaled = -data.reward  # minimize SN mean of -y
        else:
            # Shift by the minimum reward: rescales numerator and ratio by
            # a positive constant, leaving every argmin unchanged.
            exp_scaled = np.exp(-(data.reward - y_min) / alpha)
        lam = _sn_ratio(exp_scaled, base_w, best_tree.predict(data.x), data.action)
        tree = best_tree
        for _ in range(cfg.dinkelbach_max_iter):
            scores = np.zeros((data.n, data.n_actions))
            scores[np.arange(data.n), data.action] = base_w * (lam - exp_scaled)
            tree, _val = search_policy_tree(scores, data.x, depth, backend=cfg.backend)
            ratio = _sn_ratio(exp_scaled, base_w, tree.predict(data.x), data.action)
            if ratio is None:
                tree = best_tree
                break
            if ratio >= lam - 1e-13:
                break
            lam = ratio
        jv = _tree_joint_value(tree, data, base_w, delta, floor)
        if jv.value > best.value + 1e-12:
            best_tree, best = tree, jv

    return best_tree
