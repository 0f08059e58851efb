"""Policy learning: per-action nuisances, the doubly-robust score matrix,
and exact tree search over the estimated robust value.

Fitting the context-dependent dual pair separately for every policy in
the class is infeasible; instead theta_a(x) is fit once per action and
theta_{pi(x)}(x) is assembled pointwise, which reduces learning to
maximizing the mean of a fixed n x M score matrix

    S[i, a] = -[ 1{A_i=a}/p_hat(a|X_i) * (G_hat_a - g_hat_a) + g_hat_a ]

over the tree class.  Row i always uses the nuisances of its own fold,
so (1/n) sum_i S[i, pi(X_i)] reproduces the cross-fitted estimate of any
policy by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .dataset import Dataset
from .estimator import (
    EstimatorConfig,
    FoldPlan,
    RobustValueReport,
    _PROPENSITY_TAG,
    _REGRESSION_TAG,
    make_folds,
)
from .nuisance import derive_seed, fit_dual_field, fit_propensity, fit_regression
from .treesearch import policy_value_from_scores, search_policy_tree
from .trees import PolicyTree

__all__ = [
    "LearnerConfig",
    "NuisanceBundle",
    "ScoreMatrix",
    "fit_per_action_nuisances",
    "build_score_matrix",
    "learn",
]


@dataclass(frozen=True)
class LearnerConfig(EstimatorConfig):
    depth: int = 2
    eval_fraction: float = 0.0  # >0 reserves a holdout for an honest report
    backend: Optional[str] = None


@dataclass
class NuisanceBundle:
    """K x (1 + 2M) fitted objects: per fold one propensity model, per
    (fold, action) one dual field and one loss regression."""

    fold_plan: FoldPlan
    delta: float
    propensity: list            # K models
    dual_fields: list           # K lists of M DualFieldModel
    regressions: list           # K lists of M RegressionModel

    @property
    def n_actions(self) -> int:
        return len(self.dual_fields[0])


def fit_per_action_nuisances(
    data: Dataset,
    delta: float,
    cfg: Optional[LearnerConfig] = None,
) -> NuisanceBundle:
    """Fit every (fold, action) nuisance cell of the learning pipeline."""
    cfg = cfg or LearnerConfig()
    delta = float(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    plan = make_folds(data.n, cfg.n_folds, cfg.seed)
    m = data.n_actions
    nu = cfg.nuisance

    propensity, dual_fields, regressions = [], [], []
    for k in range(plan.n_folds):
        i_fit1 = plan.fold(k + 1)
        i_fit2 = plan.fold(k + 2)
        sub1 = data.subset(i_fit1)
        sub2 = data.subset(i_fit2)
        for a in range(m):
            n1 = int((sub1.action == a).sum())
            n2 = int((sub2.action == a).sum())
            if min(n1, n2) < cfg.min_samples:
                raise ValueError(
                    f"empty or thin training cell (fold {k}, action {a}): "
                    f"{min(n1, n2)} rows < {cfg.min_samples}"
                )
        if cfg.known_propensity is not None:
            from .estimator import _FixedPropensity

            propensity.append(_FixedPropensity(cfg.known_propensity, m))
        else:
            propensity.append(
                fit_propensity(sub1, nu, seed=derive_seed(cfg.seed, k, _PROPENSITY_TAG))
            )
        fields_k, regs_k = [], []
        for a in range(m):
            theta = fit_dual_field(
                sub1, a, delta, basis=cfg.basis, cfg=nu, seed=derive_seed(cfg.seed, k, a)
            )
            fields_k.append(theta)
            if cfg.regression_override is not None:
                from .estimator import _regression_override_model

                regs_k.append(_regression_override_model(cfg))
            else:
                mask = sub2.action == a
                targets = theta.loss_matrix(sub2.x[mask], sub2.reward[mask], delta)
                regs_k.append(
                    fit_regression(
                        sub2.x[mask],
                        targets,
                        nu,
                        seed=derive_seed(cfg.seed, k, _REGRESSION_TAG + a),
                    )
                )
        dual_fields.append(fields_k)
        regressions.append(regs_k)
    return NuisanceBundle(plan, delta, propensity, dual_fields, regressions)


@dataclass(frozen=True)
class ScoreMatrix:
    """Per-row, per-action doubly-robust scores (larger is better)."""

    values: np.ndarray  # (n, M)
    fold_plan: FoldPlan
    delta: float

    def policy_value(self, actions) -> float:
        return policy_value_from_scores(self.values, actions)


def build_score_matrix(data: Dataset, bundle: NuisanceBundle, delta: float) -> ScoreMatrix:
    """Assemble the score matrix; row i uses fold k(i)'s nuisances."""
    delta = float(delta)
    plan = bundle.fold_plan
    if plan.n != data.n:
        raise ValueError("bundle was fit on a dataset of different size")
    m = data.n_actions
    scores = np.empty((data.n, m))
    for k in range(plan.n_folds):
        idx = plan.fold(k)
        x = data.x[idx]
        probs = bundle.propensity[k].predict_matrix(x)
        for a in range(m):
            g_hat = np.asarray(bundle.regressions[k][a].predict(x), dtype=np.float64)
            col = -g_hat
            match = data.action[idx] == a
            if np.any(match):
                big_g = bundle.dual_fields[k][a].loss_matrix(
                    x[match], data.reward[idx][match], delta
                )
                col[match] -= (big_g - g_hat[match]) / probs[match, a]
            scores[idx, a] = col
    return ScoreMatrix(scores, plan, delta)


def _report_from_scores(scores: ScoreMatrix, actions, delta, diagnostics) -> RobustValueReport:
    plan = scores.fold_plan
    picked = scores.values[np.arange(len(actions)), actions]
    per_fold = tuple(float(-picked[plan.fold(k)].mean()) for k in range(plan.n_folds))
    estimate = -float(np.mean(per_fold))
    se = float(np.std(picked, ddof=1) / math.sqrt(len(picked))) if len(picked) > 1 else math.nan
    return RobustValueReport(estimate, per_fold, se, len(picked), delta, diagnostics)


def learn(
    data: Dataset,
    delta: float,
    cfg: Optional[LearnerConfig] = None,
) -> Tuple[PolicyTree, RobustValueReport]:
    """Learn the depth-limited tree maximizing the estimated robust value.

    The report re-evaluates the learned tree on the same score matrix, so
    it is an in-sample quantity and flagged as such; with
    ``cfg.eval_fraction > 0`` the tree is learned on the front part of
    the data and the report comes from an independent cross-fitted
    estimate on the holdout.
    """
    cfg = cfg or LearnerConfig()
    if cfg.eval_fraction > 0.0:
        rng = np.random.default_rng(derive_seed(cfg.seed, 9_999))
        perm = rng.permutation(data.n)
        n_eval = max(int(round(cfg.eval_fraction * data.n)), cfg.n_folds)
        eval_idx, train_idx = perm[:n_eval], perm[n_eval:]
        tree, _ = learn(data.subset(train_idx), delta, _no_holdout(cfg))
        from .estimator import estimate_policy_value

        report = estimate_policy_value(data.subset(eval_idx), tree, delta, _no_holdout(cfg))
        diag = dict(report.diagnostics)
        diag["in_sample"] = False
        diag["holdout_n"] = int(n_eval)
        return tree, RobustValueReport(
            report.estimate, report.per_fold, report.std_error, report.n, report.delta, diag
        )

    bundle = fit_per_action_nuisances(data, delta, cfg)
    scores = build_score_matrix(data, bundle, delta)
    tree, value = search_policy_tree(scores.values, data.x, cfg.depth, backend=cfg.backend)
    actions = tree.predict(data.x)
    report = _report_from_scores(
        scores,
        actions,
        float(delta),
        {"in_sample": True, "search_value": value, "depth": tree.depth},
    )
    return tree, report


def _no_holdout(cfg: LearnerConfig) -> LearnerConfig:
    from dataclasses import replace

    return replace(cfg, eval_fraction=0.0)
