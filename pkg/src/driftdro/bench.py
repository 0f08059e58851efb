"""Simulation designs, evaluation metrics, and adversarial fixtures.

The reference design draws covariates uniformly from the closed unit
ball of R^5 (normal direction times U^(1/5) radius) with three Gaussian
arms

    Y(a) | X ~ Normal(beta_a . X, sigma_a^2),
    beta_1 = (1, 0, 0, 0, 0)
    beta_2 = (-1/2,  sqrt(3)/2, 0, 0, 0)
    beta_3 = (-1/2, -sqrt(3)/2, 0, 0, 0),   sigma = (0.2, 0.5, 0.8),

logged under a behavior policy that plays the locally best arm with
probability 0.5 and each other arm with 0.25.  The companion target
policy assigns arms by the radius rings [0, 1/3], (1/3, 2/3], (2/3, 1].

Rewards are intentionally not clipped to a bounded interval: the
Gaussian arms are the design of record and the dual machinery handles
them as is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .basis import BasisSpec
from .dataset import Dataset, PotentialOutcomeTable
from .dual import bernoulli_worst_mean
from .nuisance import NuisanceConfig, fit_dual_field
from .trees import as_policy

__all__ = [
    "BETAS",
    "SIGMAS",
    "simulate_linear_boundary",
    "target_policy_rings",
    "empirical_robust_value",
    "kl_sphere_perturb",
    "v_min_metric",
    "HardInstance",
    "hard_instance_generator",
]

BETAS = np.array([
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [-0.5, math.sqrt(3.0) / 2.0, 0.0, 0.0, 0.0],
    [-0.5, -math.sqrt(3.0) / 2.0, 0.0, 0.0, 0.0],
])
SIGMAS = np.array([0.2, 0.5, 0.8])
_DIM = 5


def _uniform_ball(rng, n):
    g = rng.standard_normal((n, _DIM))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.random(n) ** (1.0 / _DIM)
    return g * radius[:, None]


def simulate_linear_boundary(
    n: int,
    seed: int = 0,
    with_potential_outcomes: bool = False,
) -> Union[Dataset, PotentialOutcomeTable]:
    """Draw n rows of the linear-boundary design (bit-identical per seed)."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    x = _uniform_ball(rng, n)
    mu = x @ BETAS.T                       # (n, 3)
    outcomes = mu + rng.standard_normal((n, 3)) * SIGMAS
    if with_potential_outcomes:
        sigma = np.broadcast_to(SIGMAS, mu.shape).copy()
        return PotentialOutcomeTable(x, outcomes, mu=mu, sigma=sigma)
    favored = np.argmax(mu, axis=1)
    probs = np.full((n, 3), 0.25)
    probs[np.arange(n), favored] = 0.5
    u = rng.random(n)
    cum = np.cumsum(probs, axis=1)
    actions = (u[:, None] >= cum).sum(axis=1)
    rewards = outcomes[np.arange(n), actions]
    return Dataset(x, actions, rewards, n_actions=3)


def target_policy_rings(x) -> np.ndarray:
    """Ring policy: arm 0/1/2 for radius in [0,1/3], (1/3,2/3], (2/3,1].

    Boundary radii land in the inner ring (the intervals are closed from
    below at 1/3 and 2/3).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = np.linalg.norm(x, axis=1)
    if np.any(r > 1.0 + 1e-9):
        raise ValueError("covariate outside the unit ball")
    return np.where(r <= 1.0 / 3.0, 0, np.where(r <= 2.0 / 3.0, 1, 2)).astype(np.int64)


def empirical_robust_value(
    test: PotentialOutcomeTable,
    policy,
    delta: float,
    cfg: Optional[NuisanceConfig] = None,
    basis: Optional[BasisSpec] = None,
    seed: int = 0,
) -> float:
    """Robust value of a policy on all-outcome test data.

    The dual field is fit by sieve ERM on the test set's chosen-action
    outcomes and the negated mean pointwise loss is returned.
    """
    if test.n == 0:
        raise ValueError("empty test set")
    cfg = cfg or NuisanceConfig()
    delta = float(delta)
    actions = as_policy(policy, test.n_actions)(test.x)
    chosen = test.outcomes[np.arange(test.n), actions]
    pseudo = Dataset(test.x, np.zeros(test.n, dtype=np.int64), chosen, n_actions=1)
    field_model = fit_dual_field(pseudo, 0, delta, basis=basis, cfg=cfg, seed=seed)
    losses = field_model.loss_matrix(test.x, chosen, delta)
    return -float(losses.mean())


def kl_sphere_perturb(
    test: PotentialOutcomeTable,
    delta: float,
    seed: int = 0,
) -> PotentialOutcomeTable:
    """Move every (row, arm) reward law to KL distance exactly delta.

    For equal-variance Gaussians KL = (mean shift)^2 / (2 sigma^2), so
    each arm's mean moves by sigma*sqrt(2*delta) with an independent
    random sign and the outcomes are re-sampled from the shifted laws.
    """
    if not test.has_distribution_metadata:
        raise ValueError("kl_sphere_perturb requires mu/sigma distribution metadata")
    delta = float(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=test.mu.shape) * 2 - 1
    mu2 = test.mu + signs * test.sigma * math.sqrt(2.0 * delta)
    outcomes = mu2 + rng.standard_normal(test.mu.shape) * test.sigma
    return PotentialOutcomeTable(test.x, outcomes, mu=mu2, sigma=test.sigma.copy())


def v_min_metric(policy, perturbed_sets: Sequence[PotentialOutcomeTable]) -> float:
    """Worst mean realized reward of the policy across perturbed test sets."""
    if len(perturbed_sets) < 1:
        raise ValueError("need at least one perturbed test set")
    vals = []
    for table in perturbed_sets:
        actions = as_policy(policy, table.n_actions)(table.x)
        vals.append(float(table.outcomes[np.arange(table.n), actions].mean()))
    return min(vals)


@dataclass(frozen=True)
class HardInstance:
    """Adversarial two-good-arms construction on a finite covariate support.

    Covariates are uniform over ``support`` (the standard basis of R^d).
    At support point j, arm 0 pays y_scale*Bern((1+sigma_j*gap)/2), arm 1
    pays y_scale*Bern((1-sigma_j*gap)/2), and arm 2 pays
    y_scale*Bern(1/4); the behavior policy plays arms 0 and 1 with
    probability epsilon/2 each.  Robust values of arbitrary policies are
    available in closed form through the Bernoulli worst-case oracle.
    """

    data: Dataset
    support: np.ndarray        # (d, d)
    sigma: np.ndarray          # (d,) in {-1, +1}
    arm_probs: np.ndarray      # (d, 3)
    y_scale: float
    gap: float
    epsilon: float

    @property
    def optimal_actions(self) -> np.ndarray:
        return np.where(self.sigma > 0, 0, 1)

    def support_index(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.argmax(x, axis=1)

    def robust_value(self, policy, delta: float) -> float:
        acts = as_policy(policy, 3)(self.support)
        vals = [
            self.y_scale * bernoulli_worst_mean(self.arm_probs[j, acts[j]], delta)
            for j in range(len(self.support))
        ]
        return float(np.mean(vals))

    def optimal_robust_value(self, delta: float) -> float:
        return self.y_scale * bernoulli_worst_mean((1.0 + self.gap) / 2.0, delta)

    def regret(self, policy, delta: float) -> float:
        return self.optimal_robust_value(delta) - self.robust_value(policy, delta)


def hard_instance_generator(
    n_points: int,
    gap: float,
    epsilon: float,
    sigma_seed: int,
    n: int,
    seed: int,
    y_scale: float = 1.0,
) -> HardInstance:
    """Sample a dataset from the hard-instance family."""
    if not (0.0 <= gap < 0.1):
        raise ValueError(f"gap must lie in [0, 0.1), got {gap}")
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n_points < 1 or n < 1:
        raise ValueError("n_points and n must be positive")
    if y_scale <= 0:
        raise ValueError("y_scale must be positive")
    sigma = np.random.default_rng(sigma_seed).integers(0, 2, size=n_points) * 2 - 1
    arm_probs = np.column_stack([
        (1.0 + sigma * gap) / 2.0,
        (1.0 - sigma * gap) / 2.0,
        np.full(n_points, 0.25),
    ])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n_points, size=n)
    behavior = np.array([epsilon / 2.0, epsilon / 2.0, 1.0 - epsilon])
    u = rng.random(n)
    actions = (u[:, None] >= np.cumsum(behavior)[None, :]).sum(axis=1)
    p = arm_probs[idx, actions]
    rewards = y_scale * (rng.random(n) < p).astype(np.float64)
    support = np.eye(n_points)
    x = support[idx]
    data = Dataset(x, actions, rewards, n_actions=3)
    return HardInstance(data, support, sigma, arm_probs, y_scale, gap, epsilon)
