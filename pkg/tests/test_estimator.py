import numpy as np
import pytest

from driftdro import (
    Dataset,
    EstimatorConfig,
    estimate_policy_value,
    estimate_policy_value_sweep,
    estimate_policy_value_with_covariate_shift,
    make_folds,
    simulate_linear_boundary,
    target_policy_rings,
)
from driftdro.dual import bernoulli_worst_mean
from driftdro.nuisance import NuisanceConfig, fit_propensity, fit_regression

from conftest import make_bernoulli_dataset


class TestMakeFolds:
    def test_even_split(self):
        plan = make_folds(9, 3, seed=0)
        assert sorted(plan.sizes()) == [3, 3, 3]

    def test_uneven_split(self):
        plan = make_folds(10, 3, seed=0)
        assert sorted(plan.sizes()) == [3, 3, 4]

    def test_partition(self):
        plan = make_folds(100, 4, seed=1)
        seen = np.concatenate([plan.fold(k) for k in range(4)])
        assert sorted(seen) == list(range(100))

    def test_deterministic(self):
        a = make_folds(50, 3, seed=7).assignment
        b = make_folds(50, 3, seed=7).assignment
        np.testing.assert_array_equal(a, b)
        c = make_folds(50, 3, seed=8).assignment
        assert not np.array_equal(a, c)

    def test_too_few_folds_rejected(self):
        with pytest.raises(ValueError):
            make_folds(100, 2, seed=0)

    def test_modular_fold_convention(self):
        plan = make_folds(30, 3, seed=0)
        np.testing.assert_array_equal(plan.fold(3), plan.fold(0))
        np.testing.assert_array_equal(plan.fold(4), plan.fold(1))


class TestEstimatePolicyValue:
    def test_degenerate_rewards_at_zero_radius(self):
        rng = np.random.default_rng(0)
        n = 3000
        data = Dataset(rng.uniform(-1, 1, (n, 3)), rng.integers(0, 3, n),
                       np.full(n, 0.5), n_actions=3)
        report = estimate_policy_value(data, 0, 0.0)
        assert report.estimate == pytest.approx(0.5, abs=0.01)

    def test_bernoulli_design_matches_oracle(self, bernoulli_dataset_20k):
        report = estimate_policy_value(bernoulli_dataset_20k, 1, 0.1)
        assert report.estimate == pytest.approx(bernoulli_worst_mean(0.5, 0.1), abs=0.02)
        assert report.std_error > 0

    def test_sign_convention(self, bernoulli_dataset_20k):
        report = estimate_policy_value(
            bernoulli_dataset_20k.subset(np.arange(3000)), 0, 0.05
        )
        assert report.estimate == -float(np.mean(report.per_fold))

    def test_insufficient_on_policy_samples_names_fold(self):
        data = make_bernoulli_dataset(600, seed=1)
        starved = Dataset(data.x, np.full(data.n, 2, dtype=int), data.reward, 3)
        with pytest.raises(ValueError, match="training fold"):
            estimate_policy_value(starved, 0, 0.1, EstimatorConfig(min_samples=25))

    def test_zero_radius_matches_plain_aipw(self):
        # Independent AIPW implementation with the same fold layout: fit
        # the propensity on fold k+1 and regress the raw reward on fold
        # k+2, then average the augmented IPW summands.
        data = make_bernoulli_dataset(10000, seed=2)
        cfg = EstimatorConfig(seed=5)
        report = estimate_policy_value(data, 0, 0.0, cfg)

        plan = make_folds(data.n, cfg.n_folds, cfg.seed)
        fold_means = []
        for k in range(plan.n_folds):
            i1, i2, i0 = plan.fold(k + 1), plan.fold(k + 2), plan.fold(k)
            prop = fit_propensity(data.subset(i1), cfg.nuisance, seed=1000 + k)
            mask = data.action[i2] == 0
            reg = fit_regression(data.x[i2][mask], data.reward[i2][mask],
                                 cfg.nuisance, seed=2000 + k)
            probs = prop.predict_matrix(data.x[i0])[:, 0]
            m_hat = reg.predict(data.x[i0])
            match = data.action[i0] == 0
            s = np.where(match, 1.0 / probs, 0.0) * (data.reward[i0] - m_hat) + m_hat
            fold_means.append(s.mean())
        aipw = float(np.mean(fold_means))
        assert report.estimate == pytest.approx(aipw, abs=1e-2)

    def test_monotone_in_radius(self):
        data = simulate_linear_boundary(4000, seed=3)
        reports = estimate_policy_value_sweep(
            data, target_policy_rings, [0.0, 0.05, 0.1, 0.2, 0.4], EstimatorConfig(seed=3)
        )
        estimates = [r.estimate for r in reports]
        assert all(a >= b for a, b in zip(estimates, estimates[1:]))

    def test_deterministic_report(self):
        data = make_bernoulli_dataset(1500, seed=4)
        r1 = estimate_policy_value(data, 0, 0.1, EstimatorConfig(seed=11))
        r2 = estimate_policy_value(data, 0, 0.1, EstimatorConfig(seed=11))
        assert r1.estimate == r2.estimate
        assert r1.per_fold == r2.per_fold
        assert r1.std_error == r2.std_error

    def test_diagnostics_present(self):
        data = make_bernoulli_dataset(1200, seed=6)
        report = estimate_policy_value(data, 1, 0.1)
        assert {"clip_rate", "n_folds", "solver_restarts"} <= set(report.diagnostics)
        lo, hi = report.confidence_interval()
        assert lo < report.estimate < hi


class TestDoubleRobustness:
    def test_true_propensity_zero_regression(self, bernoulli_dataset_20k):
        cfg = EstimatorConfig(
            known_propensity=lambda x: np.full((len(x), 3), 1.0 / 3.0),
            regression_override="zero",
        )
        report = estimate_policy_value(bernoulli_dataset_20k, 2, 0.1, cfg)
        truth = bernoulli_worst_mean(0.5, 0.1)
        assert abs(report.estimate - truth) <= 2 * report.std_error

    def test_corrupted_propensity_good_regression(self):
        from conftest import make_bernoulli_dataset as make

        data = make(20000, seed=31, nonuniform=True)
        cfg = EstimatorConfig(
            known_propensity=lambda x: np.full((len(x), 3), 1.0 / 3.0)
        )
        report = estimate_policy_value(data, 0, 0.1, cfg)
        truth = bernoulli_worst_mean(0.5, 0.1)
        assert abs(report.estimate - truth) <= 2 * report.std_error


class TestCovariateShift:
    def test_same_law_target_matches_plain_estimate(self):
        data = simulate_linear_boundary(4000, seed=8)
        target = simulate_linear_boundary(2500, seed=9).x
        cfg = EstimatorConfig(seed=8)
        plain = estimate_policy_value(data, target_policy_rings, 0.1, cfg)
        shifted = estimate_policy_value_with_covariate_shift(
            data, target, target_policy_rings, 0.1, cfg
        )
        joint_se = np.hypot(plain.std_error, shifted.std_error)
        assert abs(plain.estimate - shifted.estimate) <= 2 * joint_se

    def test_restricted_target_matches_oracle_resimulation(self):
        rng = np.random.default_rng(10)
        data = simulate_linear_boundary(6000, seed=10)
        pool = simulate_linear_boundary(60000, seed=11)
        inside = np.linalg.norm(pool.x, axis=1) <= 0.75
        target_x = pool.x[inside][:2500]

        cfg = EstimatorConfig(seed=10)
        shifted = estimate_policy_value_with_covariate_shift(
            data, target_x, target_policy_rings, 0.1, cfg
        )

        # Oracle: simulate directly from the restricted covariate law.
        oracle_pool = simulate_linear_boundary(80000, seed=12)
        keep = np.linalg.norm(oracle_pool.x, axis=1) <= 0.75
        oracle = Dataset(
            oracle_pool.x[keep][:6000],
            oracle_pool.action[keep][:6000],
            oracle_pool.reward[keep][:6000],
            3,
        )
        direct = estimate_policy_value(oracle, target_policy_rings, 0.1, cfg)
        joint_se = np.hypot(direct.std_error, shifted.std_error)
        assert abs(direct.estimate - shifted.estimate) <= 2 * joint_se

    def test_supplied_exact_ratio_matches_classifier(self):
        data = simulate_linear_boundary(5000, seed=13)
        pool = simulate_linear_boundary(50000, seed=14)
        inside = np.linalg.norm(pool.x, axis=1) <= 0.75
        target_x = pool.x[inside][:2000]
        p_inside = 0.75 ** 5

        def exact_ratio(x):
            return np.where(np.linalg.norm(np.atleast_2d(x), axis=1) <= 0.75,
                            1.0 / p_inside, 0.0)

        cfg = EstimatorConfig(seed=13)
        with_clf = estimate_policy_value_with_covariate_shift(
            data, target_x, target_policy_rings, 0.1, cfg
        )
        with_exact = estimate_policy_value_with_covariate_shift(
            data, target_x, target_policy_rings, 0.1, cfg, ratio_model=exact_ratio
        )
        tol = max(with_clf.std_error, with_exact.std_error)
        assert abs(with_clf.estimate - with_exact.estimate) <= tol

    def test_empty_target_rejected(self):
        data = simulate_linear_boundary(1000, seed=15)
        with pytest.raises(ValueError):
            estimate_policy_value_with_covariate_shift(
                data, np.zeros((0, 5)), target_policy_rings, 0.1
            )
