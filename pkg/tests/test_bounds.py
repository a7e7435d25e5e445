import math

import numpy as np
import pytest

from activereg.bounds import (
    BoundKind,
    check_diag_trace_lemma,
    gaussian_log_factor_lower,
    gaussian_log_factor_upper,
    lower_bound_clt,
    lower_bound_gaussian,
    lower_bound_pointwise,
    ridge_bound_report,
    upper_bound_gaussian,
    upper_bound_main,
    upper_bound_sparse,
)
from activereg.datagen import DistributionSpec, random_spd, sample_observations
from activereg.errors import DomainError, RankDeficiencyError, StateError
from activereg.numerics import spd_inverse_trace
from activereg.selectors import select_fixed_stream
from activereg.thresholds import gaussian_threshold


class TestUpper:
    def test_random_sampling_rate(self):
        assert upper_bound_main(10, 100, 1e-12, 1.0).value == pytest.approx(0.1)

    def test_substitution(self):
        assert upper_bound_main(10, 100, 0.1, 1.6).value == pytest.approx(10 / (0.81 * 1.6 * 100))

    def test_gaussian_phi(self):
        rep = upper_bound_gaussian(10, 100, 10_000, 0.05)
        phi = 1 + 2 * math.log(100) / 10
        assert rep.value == pytest.approx(10 / (0.95 ** 2 * phi * 100))
        assert rep.kind is BoundKind.UPPER_GAUSSIAN

    def test_alpha_domain(self):
        for a in (0.0, 1.0, -0.5):
            with pytest.raises(DomainError):
                upper_bound_main(5, 50, a, 1.0)

    def test_sparse_reduces_to_gaussian(self):
        assert upper_bound_sparse(10, 100, 10_000).value == pytest.approx(upper_bound_gaussian(10, 100, 10_000).value)

    def test_sparse_no_log_gain(self):
        assert upper_bound_sparse(7, 40, 40, 0.1).value == pytest.approx(7 / (0.81 * 40))

    def test_sparse_experiment_parameters(self):
        k = 3.4 * 7 * math.log(100)
        k1, k2 = 2 * k / 3, k / 3
        n2 = 400 - k1
        rep = upper_bound_sparse(7, k2, n2, 0.05)
        assert rep.value == pytest.approx(7 / (0.95 ** 2 * (1 + 2 * math.log(n2 / k2) / 7) * k2))

    def test_sparse_domain(self):
        with pytest.raises(DomainError):
            upper_bound_sparse(7, 7, 100)

    def test_caveats_present(self):
        for rep in (upper_bound_main(5, 50, 0.1, 1.0), upper_bound_sparse(3, 10, 20),
                    lower_bound_gaussian(5, 50, 1000), lower_bound_clt(5, 50, 100, 1.0)):
            assert rep.caveats
            assert rep.value >= 0

    def test_structure_matches_lower_bound(self):
        up = upper_bound_gaussian(10, 100, 10_000)
        low = lower_bound_gaussian(10, 100, 10_000)
        assert up.parameters["log_factor"] == pytest.approx(gaussian_log_factor_upper(10, 100, 10_000))
        assert low.parameters["log_factor"] == pytest.approx(gaussian_log_factor_lower(10, 10_000))
        assert up.value * (1 - 0.05) ** 2 * (1 + up.parameters["log_factor"]) == pytest.approx(
            low.value * low.parameters["log_factor"])


class TestLower:
    def test_pointwise_equal_norms(self):
        rows = np.sqrt(3.0) * np.eye(3).repeat(4, axis=0)
        assert lower_bound_pointwise(rows) == pytest.approx(3 / 12)

    def test_pointwise_homogeneous(self):
        rows = np.random.default_rng(0).standard_normal((20, 4))
        assert lower_bound_pointwise(2 * rows) == pytest.approx(lower_bound_pointwise(rows) / 4)

    def test_pointwise_empty(self):
        with pytest.raises(StateError):
            lower_bound_pointwise(np.empty((0, 3)))

    def test_pointwise_below_trace_on_runs(self):
        rule = gaussian_threshold(6, 2000, 60)
        for seed in range(200):
            x = sample_observations(DistributionSpec("gaussian", 6), 2000, (3, seed))
            sel = x[select_fixed_stream(rule, x, 60)]
            assert lower_bound_pointwise(sel) <= spd_inverse_trace(sel.T @ sel)

    def test_gaussian_substitution(self):
        rep = lower_bound_gaussian(10, 100, 10_000)
        assert rep.value == pytest.approx(10 / (100 * (2 * math.log(1e4) / 10 + math.log(math.log(1e4)))))

    def test_gaussian_decreasing_in_n(self):
        vals = [lower_bound_gaussian(10, 100, n).value for n in (100, 1000, 10_000, 100_000)]
        assert np.all(np.diff(vals) < 0)

    def test_gaussian_high_probability_form(self):
        rep = lower_bound_gaussian(10, 100, 10_000, alpha=0.05)
        c = 2 * math.lgamma(5.0) / 10
        denom = 2 * math.log(1e4) / 10 + math.log(math.log(1e4)) - math.log(math.log(1 / 0.95)) / 10 - c
        assert rep.value == pytest.approx(10 / (100 * denom))
        assert rep.parameters["C"] == pytest.approx(c)

    def test_gaussian_small_n(self):
        with pytest.raises(DomainError):
            lower_bound_gaussian(10, 1, 2)

    def test_gaussian_bound_holds_in_simulation(self):
        rule = gaussian_threshold(10, 10_000, 100)
        traces = []
        for seed in range(500):
            x = sample_observations(DistributionSpec("gaussian", 10), 10_000, (4, seed))
            sel = x[select_fixed_stream(rule, x, 100)]
            traces.append(spd_inverse_trace(sel.T @ sel))
        assert np.mean(traces) >= 0.9 * lower_bound_gaussian(10, 100, 10_000).value

    def test_clt(self):
        assert lower_bound_clt(5, 50, 1000, 0.0).value == pytest.approx(0.1)
        rep = lower_bound_clt(5, 50, 1000, 2.0)
        assert rep.value == pytest.approx(5 / ((1 + 2 / 5 * math.sqrt(2 * math.log(1000))) * 50))
        for gamma in (0.5, 3.0, 40.0):
            assert lower_bound_clt(5, 50, 1000, gamma).value <= 5 / 50


class TestDiagTrace:
    def test_diagonal_equality(self):
        res = check_diag_trace_lemma(np.diag([1.0, 2.0, 5.0]))
        assert res.holds
        assert res.trace_inverse == pytest.approx(res.trace_diag_inverse)

    def test_two_by_two(self):
        res = check_diag_trace_lemma(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert res.trace_inverse == pytest.approx(4 / 3)
        assert res.trace_diag_inverse == pytest.approx(1.0)
        assert res.holds

    def test_random(self):
        for i in range(1000):
            d = 1 + i % 8
            assert check_diag_trace_lemma(random_spd(d, (0.05, 10.0), (5, i))).holds

    def test_non_spd(self):
        with pytest.raises(RankDeficiencyError):
            check_diag_trace_lemma(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_ridge_report():
    rep = ridge_bound_report(3.0, 10.0, 1.0, 5, 2.0)
    assert rep.kind is BoundKind.RIDGE_F
    assert rep.to_dict()["parameters"]["R"] == 10.0
