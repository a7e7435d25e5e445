import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activereg.datagen import DistributionSpec, ResponseSpec, gen_responses, make_model, sample_observations
from activereg.errors import BudgetError, ShapeError, StateError
from activereg.estimators import fit_ols
from activereg.selectors import (
    LabeledStream,
    SparseConfig,
    adaptive_selector,
    fixed_selector,
    run_sparse_two_stage,
    run_stream,
    select_adaptive_stream,
    select_fixed_stream,
    step_adaptive,
    step_fixed,
)
from activereg.thresholds import gaussian_threshold, zero_rule
from activereg.whitening import WhiteningTransform, whitening_from_covariance


def gaussian_rows(d, n, seed):
    return sample_observations(DistributionSpec("gaussian", d), n, seed)


class TestFixed:
    def test_zero_threshold_is_random_sampling(self):
        x = gaussian_rows(3, 50, 1)
        state = fixed_selector(zero_rule(3), 50, 10)
        decisions = run_stream(state, x)
        assert state.selected_index == list(range(10))
        assert len(decisions) == 10 and all(d.selected for d in decisions)
        y = x @ np.array([1.0, -1.0, 2.0])
        passive = fit_ols(x[:10], y[:10]).coefficients
        assert np.array_equal(fit_ols(state.selected_design(), y[state.selected_index]).coefficients, passive)

    def test_forced_selection(self):
        rule = gaussian_threshold(2, 10, 3)
        state = fixed_selector(rule, 10, 3)
        for _ in range(7):
            step_fixed(state, np.zeros(2))
        assert state.budget.selected_count == 0
        for _ in range(3):
            _, dec = step_fixed(state, np.zeros(2))
            assert dec.selected and dec.forced and dec.weighted_norm < dec.threshold_used
        assert state.finished

    def test_budget_exact_and_binomial_exceedances(self):
        rule = gaussian_threshold(10, 2000, 100)
        x = gaussian_rows(10, 2000, 2)
        state = fixed_selector(rule, 2000, 100)
        run_stream(state, x)
        assert len(state.selected_index) == 100
        exceed = int(rule.selects(x).sum())
        assert abs(exceed - 100) <= 3 * math.sqrt(100 * (1 - 0.05))

    def test_finished_machine_rejects_rows(self):
        state = fixed_selector(zero_rule(2), 5, 1)
        step_fixed(state, np.ones(2))
        with pytest.raises(StateError):
            step_fixed(state, np.ones(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            step_fixed(fixed_selector(zero_rule(2), 5, 1), np.ones(3))

    def test_decision_invariant(self):
        rule = gaussian_threshold(4, 200, 20)
        state = fixed_selector(rule, 200, 20, whitener=whitening_from_covariance(np.diag([1.0, 2, 3, 4])))
        for dec in run_stream(state, gaussian_rows(4, 200, 3) * np.sqrt([1.0, 2, 3, 4])):
            assert dec.selected == (dec.weighted_norm >= dec.threshold_used or dec.forced)

    def test_unknown_stream_length_never_forces(self):
        state = fixed_selector(gaussian_threshold(3, 100, 5), None, 5)
        decisions = run_stream(state, np.zeros((40, 3)))
        assert not any(d.selected for d in decisions)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(2, 300), st.integers(0, 10_000), st.floats(0.01, 0.9))
def test_fast_fixed_path_matches_state_machine(d, n, seed, frac):
    k = max(1, min(n, int(frac * n)))
    rule = gaussian_threshold(d, n, k)
    x = gaussian_rows(d, n, seed)
    state = fixed_selector(rule, n, k)
    run_stream(state, x)
    assert select_fixed_stream(rule, x, k).tolist() == state.selected_index
    assert len(state.selected_index) == k


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 300), st.integers(0, 10_000), st.floats(0.01, 0.9))
def test_fast_adaptive_path_matches_state_machine(d, n, seed, frac):
    k = max(1, min(n, int(frac * n)))
    rule = gaussian_threshold(d, n, k)
    x = gaussian_rows(d, n, seed)
    state = adaptive_selector(rule, n, k, whitener=WhiteningTransform.identity(d))
    run_stream(state, x)
    assert select_adaptive_stream(rule, x, k).tolist() == state.selected_index
    assert len(state.selected_index) == k


class TestAdaptive:
    def test_first_step_matches_fixed(self):
        rule = gaussian_threshold(5, 500, 25)
        w = WhiteningTransform.identity(5)
        for x in gaussian_rows(5, 20, 4):
            _, a = step_adaptive(adaptive_selector(rule, 500, 25, whitener=w), x)
            _, f = step_fixed(fixed_selector(rule, 500, 25, whitener=w), x)
            assert a == f

    def test_threshold_decreases_without_selections(self):
        rule = gaussian_threshold(3, 100, 5)
        state = adaptive_selector(rule, 100, 5, whitener=WhiteningTransform.identity(3))
        gammas = [step_adaptive(state, np.zeros(3))[1].threshold_used for _ in range(90)]
        assert np.all(np.diff(gammas) < 0)

    def test_online_estimation_budget_exact(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((4, 4))
        x = gaussian_rows(4, 600, 6) @ a.T
        state = adaptive_selector(gaussian_threshold(4, 600, 30), 600, 30, online=True, refresh_every=5)
        run_stream(state, x)
        assert len(state.selected_index) == 30
        assert state.online.count == len(set(range(state.budget.seen_count)))
        assert state.whitener is not None

    def test_online_with_known_whitener_rejected(self):
        with pytest.raises(ValueError):
            adaptive_selector(zero_rule(2), 10, 2, whitener=WhiteningTransform.identity(2), online=True)

    def test_deterministic(self):
        x = gaussian_rows(4, 400, 7)
        runs = []
        for _ in range(2):
            state = adaptive_selector(gaussian_threshold(4, 400, 20), 400, 20, online=True)
            runs.append([d.selected for d in run_stream(state, x)])
        assert runs[0] == runs[1]


def sparse_instance(d, seed, sigma=0.5):
    s = 7
    n = 4 * d
    k = math.ceil(3.4 * s * math.log(d))
    model = make_model(d, s, (-5, 5), (seed, 0), sigma, min_abs=1.0)
    X = sample_observations(DistributionSpec("gaussian", d), n, (seed, 1))
    y = gen_responses(X, ResponseSpec(model), (seed, 2))
    return model, X, y, k


class TestSparse:
    def test_rule_weights_on_support(self):
        model, X, y, k = sparse_instance(100, 3)
        k1 = round(2 * k / 3)
        res = run_sparse_two_stage(LabeledStream(X, y), SparseConfig(k1, k - k1, 0.5, sigma_matrix=np.eye(100)))
        w = np.zeros(100)
        w[res.support] = 1.0
        assert np.array_equal(res.rule.weights, w)
        off = np.setdiff1d(np.arange(100), res.support)
        assert np.all(res.fit.coefficients[off] == 0.0)
        assert res.labels_used == k
        assert len(res.stage2_index) == k - k1
        assert np.all(res.stage2_index >= k1)

    def test_refit_all_uses_every_label(self):
        model, X, y, k = sparse_instance(100, 4)
        k1 = round(2 * k / 3)
        res = run_sparse_two_stage(LabeledStream(X, y), SparseConfig(k1, k - k1, 0.5, refit_all=True))
        assert res.fit.design_rows == k

    def test_empty_support_falls_back(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((200, 20))
        y = 0.01 * rng.standard_normal(200)
        res = run_sparse_two_stage(LabeledStream(X, y), SparseConfig(40, 20, 1.0))
        assert res.degenerate
        assert res.labels_used == 60
        assert res.stage2_index.tolist() == list(range(40, 60))

    def test_stage_two_budget_too_small(self):
        model, X, y, k = sparse_instance(100, 5)
        with pytest.raises(BudgetError):
            run_sparse_two_stage(LabeledStream(X, y), SparseConfig(70, 3, 0.5))

    def test_labels_only_for_selected_rows(self):
        model, X, y, k = sparse_instance(100, 6)
        stream = LabeledStream(X, y)
        k1 = round(2 * k / 3)
        run_sparse_two_stage(stream, SparseConfig(k1, k - k1, 0.5))
        assert stream.labels_revealed == k


def test_pointwise_lower_bound_on_selected_rows():
    rule = gaussian_threshold(5, 1000, 40)
    for seed in range(30):
        state = fixed_selector(rule, 1000, 40, whitener=WhiteningTransform.identity(5))
        run_stream(state, gaussian_rows(5, 1000, (8, seed)))
        xbar = np.array(state.selected_whitened)
        tr = np.trace(np.linalg.inv(xbar.T @ xbar))
        assert tr >= 25 / np.sum(xbar ** 2)
