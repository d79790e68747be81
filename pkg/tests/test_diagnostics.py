import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decbisect.belief import Belief, bayes_bisection_update, cdf, median, uniform_prior
from decbisect.diagnostics import (
    LAMBDA_TOL,
    MARTINGALE_TOL,
    StepRecorder,
    check_invariants,
    diagnostic_series,
    dynamic_range,
    innovation,
    lambda_from_masses,
    lambda_t,
    lemma5_gap,
    lemma5_window,
    log_belief_at_truth,
    martingale_residual,
    rmse_metrics,
    smooth_extrema_bounds,
)
from decbisect.engine import Scenario, SimulationState, async_step, default_b_grid, run_async
from decbisect.errors import InvariantViolation, ParameterError
from decbisect.network import CollaborationModel, expected_matrix, interaction_matrix, left_perron_vector

from helpers import random_belief

STEP = Belief([0.0, 0.5, 1.0], [1.5, 0.5])


def toy_model():
    P = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
    return CollaborationModel(P=P, eps=[0.2, 0.3, 0.45])


def audited_run(model, eff_iters, x_star, seed):
    sc = Scenario(model, eff_iters, x_star)
    rec = StepRecorder(sc.b_grid, x_star)
    trace = run_async(sc, np.random.default_rng(seed), observer=rec)
    v = left_perron_vector(expected_matrix(model))
    return sc, rec.records, trace, v


class TestDynamicRange:
    def test_examples(self):
        u = uniform_prior()
        assert dynamic_range([u, u, u], 0.3) == 0.0
        assert dynamic_range([STEP, u], 0.5) == pytest.approx(0.25, abs=1e-15)
        with pytest.raises(ParameterError):
            dynamic_range([], 0.5)

    def test_range_is_bounded(self, rng):
        for _ in range(50):
            bs = [random_belief(rng) for _ in range(4)]
            assert 0.0 <= dynamic_range(bs, float(rng.random())) <= 1.0


class TestLambda:
    def test_degenerate_consensus_is_one(self):
        m = toy_model()
        v = left_perron_vector(expected_matrix(m))
        assert lambda_from_masses(np.ones(3), m, v) == 1.0
        assert lambda_from_masses(np.zeros(3), m, v) == 1.0

    def test_consensus_hand_value(self, rng):
        for _ in range(20):
            M = 4
            P = rng.random((M, M)) + 0.1
            np.fill_diagonal(P, 0)
            P /= P.sum(axis=1, keepdims=True)
            m = CollaborationModel(P=P, eps=rng.uniform(0.05, 0.5, M), alpha=rng.uniform(0.1, 1, M))
            v = left_perron_vector(expected_matrix(m))
            c = float(rng.random())
            mu = min(c, 1 - c)
            expected = sum(
                m.q[i] * P[i, j] * math.cosh((v[i] + v[j]) * m.alpha[i] * (1 - 2 * m.eps[i]) * mu)
                for i in range(M)
                for j in range(M)
                if i != j
            )
            assert lambda_from_masses(np.full(M, c), m, v) == pytest.approx(expected, rel=1e-14)
            assert expected >= 1.0

    def test_matches_direct_matrix_form(self, rng):
        m = toy_model()
        v = left_perron_vector(expected_matrix(m))
        for _ in range(30):
            F = rng.random(3)
            ref = 0.0
            for i in range(3):
                for j in range(3):
                    if i == j:
                        continue
                    A = interaction_matrix(i, j, m.alpha[i], 3)
                    arg = (v[i] + v[j]) * m.alpha[i] * (1 - 2 * m.eps[i]) * min(F[i], 1 - F[i])
                    ref += m.q[i] * m.P[i, j] * math.exp(v @ A @ F - v @ F) * math.cosh(arg)
            assert lambda_from_masses(F, m, v) == pytest.approx(ref, rel=1e-13)

    def test_dimension_check(self):
        m = toy_model()
        with pytest.raises(ParameterError):
            lambda_from_masses(np.ones(2), m, np.full(3, 1 / 3))
        with pytest.raises(ParameterError):
            lambda_t([uniform_prior()], m, np.full(3, 1 / 3), 0.5)

    def test_lower_bound_along_run(self):
        model = toy_model()
        sc, _, trace, v = audited_run(model, 40, 0.7, 1)
        for k in range(trace.cdf.shape[0]):
            for c in range(sc.b_grid.size):
                assert lambda_from_masses(trace.cdf[k, :, c], model, v) >= 1.0 - LAMBDA_TOL


class TestMartingale:
    def test_symmetric_uniform_zero(self):
        m = CollaborationModel(P=[[0, 1], [1, 0]], eps=0.3)
        v = np.array([0.5, 0.5])
        u = uniform_prior()
        for b in (0.1, 0.5, 0.9):
            assert martingale_residual([u, u], m, v, b) < 1e-12

    def test_after_random_steps(self, rng):
        m = toy_model()
        v = left_perron_vector(expected_matrix(m))
        state = SimulationState(tuple(uniform_prior() for _ in range(3)), 0, 0.31)
        for _ in range(50):
            state, _ = async_step(state, m, rng)
        for b in np.linspace(0.05, 0.95, 19):
            assert martingale_residual(state.beliefs, m, v, b) < MARTINGALE_TOL

    def test_wrong_weights_break_identity(self, rng):
        # the identity is specific to the Perron vector
        m = CollaborationModel(
            P=[[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]], eps=[0.1, 0.3, 0.4], alpha=[0.2, 0.5, 0.9], q=[0.5, 0.3, 0.2]
        )
        v = left_perron_vector(expected_matrix(m))
        assert np.ptp(v) > 0.05
        priors = (STEP, uniform_prior(), Belief([0.0, 0.8, 1.0], [0.5, 3.0]))
        state = SimulationState(priors, 0, 0.31)
        for _ in range(3):
            state, _ = async_step(state, m, rng)
        wrong = np.full(3, 1 / 3)
        res = [martingale_residual(state.beliefs, m, wrong, b) for b in np.linspace(0.1, 0.9, 9)]
        assert max(res) > 1e-6
        assert max(martingale_residual(state.beliefs, m, v, b) for b in np.linspace(0.1, 0.9, 9)) < 1e-10


class TestInnovation:
    def test_closed_form_matches_integral(self, rng):
        for _ in range(100):
            b = random_belief(rng)
            eps = float(rng.uniform(0.01, 0.5))
            alpha = float(rng.uniform(0.05, 1.0))
            y = int(rng.integers(2))
            x = float(rng.random())
            post = bayes_bisection_update(b, y, eps, median(b))
            integral = alpha * (cdf(post, x) - cdf(b, x))
            assert innovation(cdf(b, x), eps, alpha, y) == pytest.approx(integral, abs=1e-12)


class TestWindowBound:
    def test_consensus_zero_innovation(self):
        F = np.full(4, 0.3)
        mats = [interaction_matrix(0, 1, 0.5, 4), interaction_matrix(2, 3, 0.5, 4)]
        assert lemma5_gap(F, F, mats, [np.zeros(4), np.zeros(4)]) == 0.0

    def test_incomplete_window(self):
        with pytest.raises(ParameterError):
            lemma5_gap(np.zeros(2), np.zeros(2), [], [])
        with pytest.raises(ParameterError):
            lemma5_gap(np.zeros(2), np.zeros(2), [np.eye(2)], [])

    def test_random_windows(self, rng):
        model = CollaborationModel(P=(1 - np.eye(5)) / 4, eps=[0.05, 0.2, 0.3, 0.45, 0.45])
        sc, records, _, _ = audited_run(model, 30, 0.55, 3)
        for _ in range(100):
            R = int(rng.integers(1, 21))
            start = int(rng.integers(0, len(records) - R))
            k = int(rng.integers(sc.b_grid.size))
            assert lemma5_window(records, start, R, k, model) >= -1e-9
        with pytest.raises(ParameterError):
            lemma5_window(records, len(records) - 2, 5, 0, model)


class TestLogBelief:
    def test_examples(self):
        u = uniform_prior()
        assert log_belief_at_truth([u, u], [0.5, 0.5], 0.4) == 0.0
        assert log_belief_at_truth([STEP], [1.0], 0.2) == pytest.approx(math.log(1.5))
        hole = Belief([0.0, 0.5, 1.0], [0.0, 1.0])
        assert log_belief_at_truth([hole], [1.0], 0.2) == -math.inf
        with pytest.raises(ParameterError):
            log_belief_at_truth([u], [0.0], 0.2)

    def test_positive_drift_in_reliable_run(self):
        model = CollaborationModel(P=(1 - np.eye(5)) / 4, eps=0.1)
        _, records, _, v = audited_run(model, 16, 0.4321, 4)
        series = diagnostic_series(records, model, v, default_b_grid(0.4321))
        lp = series.logp_weighted
        keep = ~series.logp_flagged
        half = np.arange(lp.size) >= lp.size // 2
        k = np.flatnonzero(keep & half)
        slope = np.polyfit(k, lp[k], 1)[0]
        assert slope > 0


class TestSmoothExtrema:
    def test_examples(self):
        smax, smin = smooth_extrema_bounds([0.0, 0.0], 1.0)
        assert smax == pytest.approx(math.log(2))
        assert smin == pytest.approx(-math.log(2))
        assert smooth_extrema_bounds([0.3], 7.0) == (0.3, 0.3)
        for g in (0.0, -1.0):
            with pytest.raises(ParameterError):
                smooth_extrema_bounds([1.0], g)
        with pytest.raises(ParameterError):
            smooth_extrema_bounds([], 1.0)

    def test_sharp_scale(self, rng):
        a = rng.random(10)
        smax, smin = smooth_extrema_bounds(a, 1e6)
        assert abs(smax - a.max()) < 1e-5 and abs(smin - a.min()) < 1e-5

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.sampled_from([1.0, 10.0, 100.0]))
    def test_bounds(self, a, gamma):
        a = np.array(a)
        smax, smin = smooth_extrema_bounds(a, gamma)
        slack = math.log(a.size) / gamma
        assert a.max() - 1e-12 <= smax <= a.max() + slack + 1e-12
        assert a.min() - slack - 1e-12 <= smin <= a.min() + 1e-12


class TestRMSE:
    def fake(self, med, x):
        return SimpleNamespace(median=np.atleast_2d(med), x_star=x)

    def test_examples(self):
        avg, mx = rmse_metrics([self.fake([0.3, 0.3], 0.3)], 0)
        assert (avg, mx) == (0.0, 0.0)
        avg, mx = rmse_metrics([self.fake([0.6, 0.8], 0.5)], 0)
        assert avg == pytest.approx(math.sqrt(0.05))
        assert mx == pytest.approx(0.3)
        with pytest.raises(ParameterError):
            rmse_metrics([], 0)

    def test_max_dominates_avg(self, rng):
        traces = [self.fake(rng.random((3, 4)), float(rng.random())) for _ in range(10)]
        for k in range(3):
            avg, mx = rmse_metrics(traces, k)
            assert mx >= avg


class TestSeries:
    def test_toy_run_clean(self):
        model = toy_model()
        sc, records, trace, v = audited_run(model, 50, 0.3141, 5)
        s = diagnostic_series(records, model, v, sc.b_grid)
        check_invariants(s)
        assert s.mart.max() < MARTINGALE_TOL
        assert np.all(s.lam >= 1 - LAMBDA_TOL)
        assert np.all((s.mu >= 0) & (s.mu <= 0.5))
        assert np.all((s.V >= 0) & (s.V <= 1))
        # V recomputed from the raw snapshot cdf values
        np.testing.assert_array_equal(s.V, trace.cdf.max(axis=1) - trace.cdf.min(axis=1))
        rows = list(s.rows(trial=7))
        assert len(rows) == 51 * sc.b_grid.size
        assert rows[0][:3] == (7, 0, sc.b_grid[0])

    def test_corrupted_cdf_is_named(self):
        model = toy_model()
        sc, records, _, v = audited_run(model, 10, 0.3141, 5)
        bad = records[3 * 4 + 1]
        bad.F = bad.F.copy()
        bad.F[1, 2] = 1.0 - bad.F[1, 2]
        s = diagnostic_series(records, model, v, sc.b_grid)
        with pytest.raises(InvariantViolation) as exc:
            check_invariants(s)
        assert exc.value.kind == "martingale"
        assert exc.value.eff_iter == 5
        assert exc.value.b == sc.b_grid[2]

    def test_saturated_rows_are_flagged_and_exempt(self):
        model = CollaborationModel(P=toy_model().P, eps=0.02)
        sc, records, _, v = audited_run(model, 150, 0.3141, 1)
        s = diagnostic_series(records, model, v, sc.b_grid)
        assert not s.saturated[:10].any()
        assert s.saturated[-1]
        assert s.mart[~s.saturated].max() < MARTINGALE_TOL
        check_invariants(s)

    def test_needs_whole_iterations(self):
        model = toy_model()
        sc, records, _, v = audited_run(model, 2, 0.5, 0)
        with pytest.raises(ParameterError):
            diagnostic_series(records[:-1], model, v, sc.b_grid)
