import math

import numpy as np
import pytest

from qprocess import (
    NormalizationDrift,
    NotDefinedForCritical,
    TruncationTooSevere,
    build_model,
    default_j_max,
    i_fold_transition,
    population_gf,
    qprocess_gf,
    qprocess_mean,
    qprocess_p11,
    qprocess_p11_limit,
    qprocess_transition_probs,
    qprocess_variance,
    transition_probs,
)
from qprocess.gf import transition_prob_tables

import oracles


class TestPopulationGf:
    def test_time_zero_is_identity(self, critical):
        for x in [0.0, 0.3, 0.9, 1.0]:
            assert population_gf(critical, 0.0, x) == x

    @pytest.mark.parametrize("t", [0.5, 3.0, 7.0])
    def test_fixed_points(self, supercritical, t):
        assert population_gf(supercritical, t, 1.0) == pytest.approx(1.0, abs=1e-9)
        assert population_gf(supercritical, t, 0.5) == pytest.approx(0.5, abs=1e-9)

    def test_monotone_in_x(self, critical):
        xs = np.linspace(0.0, 1.0, 11)
        vals = [population_gf(critical, 2.0, x) for x in xs]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_semigroup_property(self, all_models):
        for m in all_models.values():
            for s, t in [(0.5, 1.5), (2.0, 3.0)]:
                for x in [0.0, 0.4, 0.8]:
                    inner = population_gf(m, s, x, ode_tol=1e-11)
                    assert population_gf(m, t, inner, ode_tol=1e-11) == pytest.approx(
                        population_gf(m, t + s, x, ode_tol=1e-11), abs=2e-10
                    )

    @pytest.mark.parametrize(
        "oracle,model_name",
        [
            (oracles.critical_phi, "critical"),
            (oracles.subcritical_phi, "subcritical"),
            (oracles.supercritical_phi, "supercritical"),
        ],
    )
    def test_matches_hand_solved_flows(self, all_models, oracle, model_name):
        m = all_models[model_name]
        for t in [0.7, 5.0, 20.0]:
            for x in [0.0, 0.25, 0.6, 0.95]:
                assert population_gf(m, t, x) == pytest.approx(
                    float(oracle(t, x)), abs=1e-9
                )

    def test_rejects_bad_inputs(self, critical):
        with pytest.raises(ValueError):
            population_gf(critical, 1.0, 1.5)
        with pytest.raises(ValueError):
            population_gf(critical, -1.0, 0.5)


class TestTransitionProbs:
    def test_time_zero_indicator(self, critical):
        tab = transition_probs(critical, 0.0, J_max=10)
        assert tab.probs[1] == 1.0
        assert tab.probs.sum() == 1.0

    def test_short_time_slopes_match_intensities(self, critical):
        eps = 1e-4
        tab = transition_probs(critical, eps, J_max=30, ode_tol=1e-12)
        delta = np.zeros(31)
        delta[1] = 1.0
        slopes = (tab.probs - delta) / eps
        for j in range(4):
            a_j = critical.a[j] if j <= critical.k_max else 0.0
            assert slopes[j] == pytest.approx(a_j, abs=1e-3)

    @pytest.mark.parametrize("model_name", ["critical", "subcritical"])
    def test_truncation_mass_negligible_at_default_size(self, all_models, model_name):
        m = all_models[model_name]
        tab = transition_probs(m, 5.0)
        assert abs(tab.truncation_mass) <= 1e-10
        assert tab.probs.sum() == pytest.approx(1.0, abs=1e-10)

    def test_truncation_reported_for_fast_growth(self, supercritical):
        # growing population leaks mass through the truncated window
        tab = transition_probs(supercritical, 10.0, J_max=220)
        assert tab.truncation_mass > 0.1
        with pytest.raises(TruncationTooSevere):
            transition_probs(supercritical, 10.0, J_max=220, max_truncation=0.1)

    def test_matches_contour_oracle(self, critical, supercritical):
        for m, t in [(critical, 5.0), (supercritical, 1.0)]:
            tab = transition_probs(m, t, J_max=200, ode_tol=1e-12)
            oracle = oracles.contour_transition_table(m.a, t)
            np.testing.assert_allclose(tab.probs[:80], oracle[:80], atol=1e-9)

    def test_matches_closed_form_critical_table(self, critical):
        tab = transition_probs(critical, 5.0, ode_tol=1e-12)
        expected = oracles.critical_p1j(5.0, tab.probs.size - 1)
        np.testing.assert_allclose(tab.probs, expected, atol=1e-11)

    def test_probs_lie_in_unit_interval(self, supercritical):
        tab = transition_probs(supercritical, 2.0)
        assert np.all(tab.probs >= 0.0)
        assert np.all(tab.probs <= 1.0)

    def test_multi_time_batch_matches_single_solves(self, critical):
        batch = transition_prob_tables(critical, [1.0, 5.0], J_max=150)
        for tab in batch:
            single = transition_probs(critical, tab.t, J_max=150)
            np.testing.assert_allclose(tab.probs, single.probs, atol=1e-11)


class TestIFoldTransition:
    def test_one_fold_is_base_table(self, critical):
        a = i_fold_transition(critical, 1, 2.0, J_max=100)
        b = transition_probs(critical, 2.0, J_max=100)
        np.testing.assert_array_equal(a.probs, b.probs)

    def test_time_zero_indicator_at_i(self, critical):
        tab = i_fold_transition(critical, 3, 0.0, J_max=12)
        assert tab.probs[3] == 1.0
        assert tab.probs.sum() == 1.0

    def test_extinction_entry_squares(self, supercritical):
        one = transition_probs(supercritical, 2.0, J_max=150)
        two = i_fold_transition(supercritical, 2, 2.0, J_max=150)
        assert two.probs[0] == pytest.approx(one.probs[0] ** 2, rel=1e-12)

    def test_rejects_bad_base_state(self, critical):
        with pytest.raises(ValueError):
            i_fold_transition(critical, 0, 1.0)


class TestQProcessTable:
    @pytest.mark.parametrize("i", [1, 2, 3])
    @pytest.mark.parametrize("t", [1.0, 5.0])
    def test_normalization(self, all_models, i, t):
        for m in all_models.values():
            tab = qprocess_transition_probs(m, i, t)
            assert abs(tab.probs.sum() - 1.0) <= 1e-8

    def test_time_zero_indicator(self, supercritical):
        tab = qprocess_transition_probs(supercritical, 2, 0.0, J_max=10)
        assert tab.probs[2] == 1.0

    def test_state_zero_unreachable(self, all_models):
        for m in all_models.values():
            tab = qprocess_transition_probs(m, 1, 2.0)
            assert tab.probs[0] == 0.0

    def test_critical_table_is_size_biased_base_table(self, critical):
        # with q = 1 and beta = 1 the conditioned law is j * P_1j(t)
        t = 4.0
        base = transition_probs(critical, t, ode_tol=1e-12)
        tab = qprocess_transition_probs(critical, 1, t, ode_tol=1e-12)
        j = np.arange(base.probs.size)
        np.testing.assert_allclose(tab.probs, j * base.probs, atol=1e-12)

    def test_transform_shares_the_conditioned_law(self, supercritical, subcritical):
        # the conditioned process only sees the transformed intensities, so
        # both desk models produce identical tables
        a = qprocess_transition_probs(supercritical, 1, 3.0)
        b = qprocess_transition_probs(subcritical, 1, 3.0)
        np.testing.assert_allclose(a.probs, b.probs, atol=1e-9)

    def test_drift_guard_raises_on_undersized_window(self, critical):
        with pytest.raises((NormalizationDrift, TruncationTooSevere)):
            qprocess_transition_probs(critical, 1, 20.0, J_max=30)


class TestQProcessGf:
    def test_at_one(self, all_models):
        for m in all_models.values():
            for i in [1, 2, 5]:
                assert qprocess_gf(m, i, 3.0, 1.0) == pytest.approx(1.0, abs=1e-9)

    def test_time_zero_power(self, supercritical):
        for i in [1, 2, 4]:
            assert qprocess_gf(supercritical, i, 0.0, 0.7) == pytest.approx(0.7**i)

    @pytest.mark.parametrize("t", [1.0, 5.0])
    @pytest.mark.parametrize("x", [0.3, 0.7])
    def test_matches_table_series(self, critical, supercritical, t, x):
        for m in (critical, supercritical):
            tab = qprocess_transition_probs(m, 1, t, ode_tol=1e-12)
            series = float(np.sum(tab.probs * x ** np.arange(tab.probs.size)))
            assert qprocess_gf(m, 1, t, x, ode_tol=1e-12) == pytest.approx(
                series, abs=1e-6
            )

    def test_derivative_matches_series_for_critical(self, critical):
        # d/dx of the start-1 generating function against the weighted series
        m, t, x = critical, 2.0, 0.6
        h = 1e-5
        fd = (qprocess_gf(m, 1, t, x + h, 1e-12) - qprocess_gf(m, 1, t, x - h, 1e-12)) / (2 * h)
        tab = qprocess_transition_probs(m, 1, t, ode_tol=1e-12)
        j = np.arange(tab.probs.size)
        series = float(np.sum(j[1:] * tab.probs[1:] * x ** (j[1:] - 1.0)))
        assert fd == pytest.approx(series, abs=1e-5)


class TestP11:
    def test_matches_table_entry(self, critical, supercritical):
        for m, t in [(critical, 5.0), (critical, 25.0), (supercritical, 5.0)]:
            tab = qprocess_transition_probs(m, 1, t, ode_tol=1e-12)
            assert qprocess_p11(m, t) == pytest.approx(tab.probs[1], rel=1e-7)

    def test_time_zero(self, critical):
        assert qprocess_p11(critical, 0.0) == 1.0

    def test_grid_evaluation_handles_unsorted_input(self, critical):
        grid = qprocess_p11(critical, [50.0, 25.0, 100.0])
        singles = [qprocess_p11(critical, t) for t in [50.0, 25.0, 100.0]]
        np.testing.assert_allclose(grid, singles, rtol=1e-10)

    def test_critical_scaled_deviation_decreases(self, critical):
        ts = np.array([10.0, 20.0, 40.0, 80.0])
        vals = ts**2 * qprocess_p11(critical, ts)
        dev = np.abs(vals - qprocess_p11_limit(critical))
        assert np.all(np.diff(dev) < 0)


class TestP11Limit:
    def test_desk_values(self, critical, supercritical, subcritical):
        assert qprocess_p11_limit(critical) == pytest.approx(4.0, abs=1e-12)
        assert qprocess_p11_limit(subcritical) == pytest.approx(
            0.5 * oracles.A_CONSTANT_SUBCRITICAL / 1.0, rel=1e-9
        )
        assert qprocess_p11_limit(supercritical) == pytest.approx(
            0.5 * oracles.A_CONSTANT_SUPERCRITICAL / 0.5, rel=1e-9
        )

    def test_always_finite(self, all_models):
        for m in all_models.values():
            assert math.isfinite(qprocess_p11_limit(m))


class TestMoments:
    def test_critical_frozen_values(self, critical):
        assert qprocess_mean(critical, 1, 10.0) == pytest.approx(11.0)
        # one immortal line plus drift: linear term plus half drift squared
        assert qprocess_variance(critical, 1, 10.0) == pytest.approx(60.0)

    def test_time_zero_degenerate(self, all_models):
        for m in all_models.values():
            for i in [1, 3]:
                assert qprocess_mean(m, i, 0.0) == pytest.approx(float(i))
                assert qprocess_variance(m, i, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_supercritical_long_time_limits(self, supercritical):
        m = supercritical
        assert qprocess_mean(m, 1, 80.0) == pytest.approx(1.0 + m.gamma, rel=1e-9)
        expected = m.gamma + m.gamma**2 / 2.0
        assert qprocess_variance(m, 1, 80.0) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("i", [1, 2, 3])
    @pytest.mark.parametrize("t", [1.0, 5.0])
    def test_series_moments_match_closed_forms(self, all_models, i, t):
        for m in all_models.values():
            tab = qprocess_transition_probs(m, i, t, ode_tol=1e-12)
            mean = tab.mean()
            var = tab.second_moment() - mean**2
            assert mean == pytest.approx(qprocess_mean(m, i, t), abs=1e-6)
            assert var == pytest.approx(qprocess_variance(m, i, t), abs=1e-5)

    def test_variance_formula_with_cubic_intensities(self):
        # third-derivative contribution exercised by a model with triplets
        m = build_model([0.7, -1.2, 0.3, 0.2])
        assert m.is_critical
        tab = qprocess_transition_probs(m, 1, 1.0, J_max=400, ode_tol=1e-12)
        var = tab.second_moment() - tab.mean() ** 2
        assert var == pytest.approx(qprocess_variance(m, 1, 1.0), abs=1e-8)

    def test_rejects_bad_inputs(self, critical):
        with pytest.raises(ValueError):
            qprocess_mean(critical, 0, 1.0)
        with pytest.raises(ValueError):
            qprocess_variance(critical, 1, -2.0)

    def test_moment_pair_bundles_both(self, supercritical):
        from qprocess import qprocess_moments

        pair = qprocess_moments(supercritical, 2, 3.0)
        assert pair.mean == qprocess_mean(supercritical, 2, 3.0)
        assert pair.variance == qprocess_variance(supercritical, 2, 3.0)


class TestStationaryFactor:
    def test_at_one(self, supercritical):
        from qprocess import stationary_gf_factor

        assert stationary_gf_factor(supercritical, 1.0) == 1.0

    def test_matches_closed_form(self, supercritical, subcritical):
        from qprocess import stationary_gf_factor

        for m in (supercritical, subcritical):
            for x in [0.2, 0.5, 0.9]:
                assert stationary_gf_factor(m, x) == pytest.approx(
                    float(oracles.subcritical_stationary_factor(x)), rel=1e-8
                )

    def test_near_one_asymptote(self, supercritical):
        from qprocess import stationary_gf_factor

        x = 0.999
        lin = 1.0 - supercritical.gamma * (1.0 - x)
        assert abs(stationary_gf_factor(supercritical, x) - lin) < 1e-4

    def test_long_time_gf_converges_to_factor(self, supercritical):
        from qprocess import stationary_gf_factor

        x = 0.5
        g30 = qprocess_gf(supercritical, 1, 30.0, x, ode_tol=1e-12)
        g60 = qprocess_gf(supercritical, 1, 60.0, x, ode_tol=1e-12)
        assert abs(g30 - g60) < 1e-4
        assert g60 == pytest.approx(x * stationary_gf_factor(supercritical, x), abs=1e-8)

    def test_rejects_critical_and_bad_x(self, critical, supercritical):
        from qprocess import stationary_gf_factor

        with pytest.raises(NotDefinedForCritical):
            stationary_gf_factor(critical, 0.5)
        with pytest.raises(ValueError):
            stationary_gf_factor(supercritical, 0.0)


class TestDefaultWindow:
    def test_scales_with_drift_and_start(self, critical):
        assert default_j_max(critical, 10.0) == max(critical.k_max, 220)
        assert default_j_max(critical, 10.0, i=3) > default_j_max(critical, 10.0)
