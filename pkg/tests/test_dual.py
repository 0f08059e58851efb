import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftdro.dual import (
    DEFAULT_ALPHA_FLOOR,
    DiscreteDist,
    DualParams,
    SolverConfig,
    bernoulli_worst_mean,
    binary_kl,
    loss,
    loss_grad,
    max_feasible_radius,
    solve_dual,
    worst_case_mean_discrete,
)


class TestLoss:
    def test_zero_at_matched_stationary_point(self):
        assert loss(0.0, DualParams(1.0, -1.0), 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_closed_form_value(self):
        got = loss(1.0, DualParams(1.0, 0.0), 0.1)
        assert got == pytest.approx(math.exp(-2.0) + 0.1, rel=1e-12)

    @pytest.mark.parametrize("alpha,c", [(0.5, 0.3), (1.7, -2.0), (0.001, 4.0)])
    def test_stationary_eta_identity(self, alpha, c):
        # At eta = -c - alpha the exponent vanishes and the loss is -c.
        assert loss(c, DualParams(alpha, -c - alpha), 0.0) == pytest.approx(-c, rel=1e-12, abs=1e-12)

    def test_non_finite_input_rejected(self):
        with pytest.raises(ValueError, match="non-finite operand"):
            loss(math.nan, DualParams(1.0, 0.0), 0.1)
        with pytest.raises(ValueError, match="non-finite operand"):
            loss(0.0, DualParams(1.0, 0.0), math.inf)
        with pytest.raises(ValueError, match="non-finite operand"):
            DualParams(math.inf, 0.0)

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError):
            loss(0.0, DualParams(1.0, 0.0), -0.1)

    def test_finite_for_extreme_operands(self):
        assert math.isfinite(loss(-1e6, DualParams(0.001, 1e5), 0.5))


class TestLossGrad:
    def test_eta_gradient_vanishes_at_stationary_point(self):
        _, d_eta = loss_grad(0.0, DualParams(1.0, -1.0), 0.0)
        assert d_eta == pytest.approx(0.0, abs=1e-15)

    def test_alpha_gradient_reduces_to_delta(self):
        d_alpha, _ = loss_grad(0.0, DualParams(1.0, -1.0), 0.3)
        assert d_alpha == pytest.approx(0.3, rel=1e-12)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(200):
            y = rng.uniform(0.0, 1.0)
            alpha = rng.uniform(0.1, 5.0)
            eta = rng.uniform(-2.0, 2.0)
            delta = rng.uniform(0.0, 0.3)
            da, de = loss_grad(y, DualParams(alpha, eta), delta)
            fd_a = (loss(y, DualParams(alpha + h, eta), delta)
                    - loss(y, DualParams(alpha - h, eta), delta)) / (2 * h)
            fd_e = (loss(y, DualParams(alpha, eta + h), delta)
                    - loss(y, DualParams(alpha, eta - h), delta)) / (2 * h)
            assert da == pytest.approx(fd_a, rel=1e-5, abs=1e-8)
            assert de == pytest.approx(fd_e, rel=1e-5, abs=1e-8)


class TestSolveDual:
    def test_point_mass_reaches_alpha_floor(self):
        theta, value = solve_dual([0.5] * 20, None, 0.1)
        assert -0.5 <= value <= -0.4999
        assert theta.alpha <= 10 * DEFAULT_ALPHA_FLOOR

    def test_point_mass_floor_bound(self):
        for c, delta in [(0.7, 0.3), (0.2, 0.05)]:
            _, value = solve_dual([c] * 5, None, delta)
            assert abs(value - (-c)) <= 2 * DEFAULT_ALPHA_FLOOR * delta + 1e-9

    def test_two_point_matches_bernoulli_oracle(self):
        _, value = solve_dual([0.0, 1.0], None, 0.1)
        assert -value == pytest.approx(bernoulli_worst_mean(0.5, 0.1), abs=1e-6)

    def test_zero_radius_recovers_mean(self):
        _, value = solve_dual([0.0, 1.0], None, 0.0)
        assert -value == pytest.approx(0.5, abs=1e-6)

    def test_weighted_mean_at_zero_radius(self):
        _, value = solve_dual([0.0, 1.0], [0.25, 0.75], 0.0)
        assert -value == pytest.approx(0.75, abs=1e-6)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            solve_dual([], None, 0.1)

    def test_zero_weight_sum_rejected(self):
        with pytest.raises(ValueError):
            solve_dual([0.0, 1.0], [0.0, 0.0], 0.1)

    def test_deterministic(self):
        a = solve_dual([0.1, 0.4, 0.9], None, 0.2)
        b = solve_dual([0.1, 0.4, 0.9], None, 0.2)
        assert a[0] == b[0] and a[1] == b[1]

    def test_strong_duality_on_random_supports(self):
        rng = np.random.default_rng(11)
        for _ in range(120):
            k = int(rng.integers(2, 9))
            values = rng.random(k)
            probs = rng.random(k) + 0.05
            probs /= probs.sum()
            dist = DiscreteDist(values, probs)
            delta = rng.uniform(1e-4, 0.9 * max_feasible_radius(dist))
            primal = worst_case_mean_discrete(dist, delta)
            _, dual_value = solve_dual(values, probs, delta)
            assert -dual_value == pytest.approx(primal, abs=1e-5)


class TestWorstCaseMeanDiscrete:
    def test_zero_radius_is_identity(self):
        dist = DiscreteDist([0.0, 1.0], [0.5, 0.5])
        assert worst_case_mean_discrete(dist, 0.0) == 0.5

    def test_two_point_bisection_value(self):
        dist = DiscreteDist([0.0, 1.0], [0.5, 0.5])
        got = worst_case_mean_discrete(dist, 0.1)
        assert got == pytest.approx(bernoulli_worst_mean(0.5, 0.1), abs=1e-10)

    def test_large_radius_reaches_essential_infimum(self):
        dist = DiscreteDist([0.0, 1.0], [0.5, 0.5])
        assert worst_case_mean_discrete(dist, 0.7) == 0.0  # 0.7 > log 2

    def test_negative_radius_rejected(self):
        dist = DiscreteDist([0.0, 1.0], [0.5, 0.5])
        with pytest.raises(ValueError):
            worst_case_mean_discrete(dist, -0.01)

    @given(
        values=st.lists(st.floats(-5, 5), min_size=2, max_size=8),
        raw_probs=st.lists(st.floats(0.05, 1.0), min_size=8, max_size=8),
        frac=st.floats(0.05, 0.85),
        shift=st.floats(-3, 3),
    )
    @settings(max_examples=60, deadline=None)
    def test_translation_equivariance(self, values, raw_probs, frac, shift):
        probs = np.array(raw_probs[: len(values)])
        probs /= probs.sum()
        dist = DiscreteDist(values, probs)
        delta = frac * min(max_feasible_radius(dist), 3.0)
        base = worst_case_mean_discrete(dist, delta)
        moved = worst_case_mean_discrete(
            DiscreteDist(np.array(values) + shift, probs), delta
        )
        assert moved == pytest.approx(base + shift, abs=1e-8)

    @given(
        values=st.lists(st.floats(-5, 5), min_size=2, max_size=8),
        raw_probs=st.lists(st.floats(0.05, 1.0), min_size=8, max_size=8),
        frac=st.floats(0.05, 0.85),
        scale=st.floats(0.1, 7.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_positive_scaling_equivariance(self, values, raw_probs, frac, scale):
        probs = np.array(raw_probs[: len(values)])
        probs /= probs.sum()
        dist = DiscreteDist(values, probs)
        delta = frac * min(max_feasible_radius(dist), 3.0)
        base = worst_case_mean_discrete(dist, delta)
        scaled = worst_case_mean_discrete(
            DiscreteDist(scale * np.array(values), probs), delta
        )
        assert scaled == pytest.approx(scale * base, rel=1e-8, abs=1e-8)

    def test_monotone_in_radius_and_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            k = int(rng.integers(2, 8))
            values = rng.normal(size=k)
            probs = rng.random(k) + 0.02
            probs /= probs.sum()
            dist = DiscreteDist(values, probs)
            grid = np.linspace(0.0, 1.5 * max_feasible_radius(dist), 12)
            outs = [worst_case_mean_discrete(dist, d) for d in grid]
            assert all(a >= b - 1e-10 for a, b in zip(outs, outs[1:]))
            for v in outs:
                assert values.min() - 1e-12 <= v <= dist.mean + 1e-12


class TestBernoulliWorstMean:
    def test_zero_radius(self):
        assert bernoulli_worst_mean(0.5, 0.0) == 0.5

    def test_reference_value(self):
        got = bernoulli_worst_mean(0.5, 0.1)
        assert got == pytest.approx(0.2802, abs=2e-4)
        assert binary_kl(got, 0.5) == pytest.approx(0.1, abs=1e-10)

    def test_feasible_zero(self):
        # -log(1 - 0.9) ~ 2.30: a radius beyond it admits the zero mass point.
        assert bernoulli_worst_mean(0.9, 2.5) == 0.0

    def test_out_of_range_rejected(self):
        for q in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                bernoulli_worst_mean(q, 0.1)

    def test_slope_lower_bound_on_grid(self):
        # Numerical derivative of the worst-case map stays above 1/2 for
        # moderate radii around the balanced coin.
        h = 1e-6
        for delta in (0.05, 0.2):
            for q in np.arange(0.4, 0.6001, 0.01):
                slope = (
                    bernoulli_worst_mean(q + h, delta) - bernoulli_worst_mean(q - h, delta)
                ) / (2 * h)
                assert slope >= 0.5 - 1e-3


class TestDiscreteDistValidation:
    def test_prob_sum_enforced(self):
        with pytest.raises(ValueError):
            DiscreteDist([0.0, 1.0], [0.5, 0.6])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            DiscreteDist([0.0, 1.0, 2.0], [0.5, 0.5])

    def test_non_finite_values(self):
        with pytest.raises(ValueError):
            DiscreteDist([0.0, math.inf], [0.5, 0.5])

    def test_negative_prob(self):
        with pytest.raises(ValueError):
            DiscreteDist([0.0, 1.0], [-0.5, 1.5])


class TestSolverConfig:
    def test_restart_count_is_respected(self):
        cfg = SolverConfig(restarts=2, polish=False)
        theta, value = solve_dual([0.0, 0.3, 1.0], None, 0.15, cfg)
        assert math.isfinite(value)
        # More restarts plus polish can only improve the attained minimum.
        _, better = solve_dual([0.0, 0.3, 1.0], None, 0.15, SolverConfig())
        assert better <= value + 1e-12
