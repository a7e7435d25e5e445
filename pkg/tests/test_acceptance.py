"""Acceptance criteria 1-11, one PASS/FAIL line each.

Every test records its verdict through ``acceptance_log.record`` before
asserting, so the terminal summary lists all criteria even when some fail.
Run ``pytest tests/test_acceptance.py -v`` (``-s`` additionally echoes the
lines as they are produced).
"""

import math
import time

import numpy as np
import pytest

from acceptance_log import record
from oracles.generate import gradient_descent, lasso_fista, lasso_grid_1d
from activereg import (
    ExperimentConfig,
    LabeledStream,
    SparseConfig,
    check_diag_trace_lemma,
    chi2_quantile,
    fit_lasso,
    fit_ols,
    fit_ridge,
    make_model,
    make_rng,
    ridge_mse_bound,
    run_experiment,
    run_sparse_two_stage,
)
from activereg.datagen import (DistributionKind, DistributionSpec, ResponseSpec, gen_responses, random_spd,
                               sample_observations)
from activereg.estimators import lasso_objective
from activereg.selectors import select_fixed_stream
from activereg.thresholds import clt_threshold, gaussian_threshold


def _median_ratio(report, point, num, den):
    return float(np.median(report.metrics(point, num)) / np.median(report.metrics(point, den)))


# --- 1 ------------------------------------------------------------------------

def test_criterion_01_gaussian_gain():
    cfg = ExperimentConfig(variants=["random", "fixed"], d=10, n_values=[900, 2500, 10_000], k_rule="sqrt",
                           replications=200, seed=1, estimator="ols")
    t0 = time.perf_counter()
    rep = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    ok = not rep.failures and elapsed <= 120.0
    parts = []
    for i, (n, k) in enumerate([(900, 30), (2500, 50), (10_000, 100)]):
        gain = 1.0 / (1.0 + 2.0 * math.log(n / k) / 10)
        r = _median_ratio(rep, i, "fixed", "random")
        inside = 0.5 * gain <= r <= gain
        ok &= inside
        parts.append(f"n={n}: ratio {r:.3f} in [{0.5 * gain:.3f}, {gain:.3f}]={inside}")
    record(1, ok, ", ".join(parts) + f"; runtime {elapsed:.1f}s (limit 120s)")
    assert ok


# --- 2 ------------------------------------------------------------------------

def test_criterion_02_threshold_sandwich():
    bad = []
    for d in range(9, 51):
        for ratio in (17, 50, 100, 1000):
            g2 = gaussian_threshold(d, ratio, 1).gamma ** 2
            lo = d + 2.0 * math.log(ratio)
            hi = lo + 2.0 * math.sqrt(d * math.log(ratio))
            if not lo <= g2 <= hi:
                bad.append((d, ratio, g2, lo, hi))
    ok = not bad
    record(2, ok, f"{42 * 4 - len(bad)}/168 (d, ratio) pairs inside the sandwich" + (f"; first miss {bad[0]}" if bad else ""))
    assert ok


# --- 3 ------------------------------------------------------------------------

def test_criterion_03_clt_accuracy():
    errs = {}
    for rate in (0.01, 0.05):
        clt = clt_threshold(100, 1.0 / rate, 1, 3.0).gamma ** 2
        exact = chi2_quantile(100, 1.0 - rate)
        errs[rate] = abs(clt - exact) / exact
    ok = all(e <= 0.05 for e in errs.values())
    record(3, ok, ", ".join(f"k/n={r}: rel. error {e:.4f}" for r, e in errs.items()) + " (limit 0.05)")
    assert ok


# --- 4 ------------------------------------------------------------------------

def _sparse_stage2_trace_and_bound(seed):
    d, s, n, sigma = 40, 4, 400, 0.5
    k = math.ceil(3.4 * s * math.log(d))
    k1 = round(2 * k / 3)
    cov = random_spd(d, seed=(seed, 1))
    model = make_model(d, s, seed=(seed, 2), noise_sigma=sigma, min_abs=1.0)
    X = sample_observations(DistributionSpec(DistributionKind.GAUSSIAN, d, cov), n, (seed, 3))
    y = gen_responses(X, ResponseSpec(model), (seed, 4))
    res = run_sparse_two_stage(LabeledStream(X, y), SparseConfig(k1, k - k1, sigma, sigma_matrix=cov))
    if res.degenerate:
        return None
    S = res.support
    Xs = X[res.stage2_index][:, S]
    trace = float(np.trace(np.linalg.solve(Xs.T @ Xs, cov[np.ix_(S, S)])))
    w = res.stage2_whitened
    return trace, S.size ** 2 / float(np.sum(w * w))


def test_criterion_04_pointwise_lower_bound():
    variants = ["random", "fixed", "adaptive", "adaptive-online"]
    cfg = ExperimentConfig(variants=variants, d=10, n_values=[2500], k_rule=50, replications=200, seed=4,
                           covariance={"kind": "random", "seed": 4})
    rep = run_experiment(cfg)
    counts = {}
    ok = not rep.failures
    for v in variants:
        recs = [r for r in rep.records if r["variant"] == v and r["status"] == "ok"]
        held = sum(r["lower_pointwise"] <= r["trace"] for r in recs)
        counts[v] = (held, len(recs))
        ok &= held == len(recs) == 200
    sparse = [_sparse_stage2_trace_and_bound(seed) for seed in range(200)]
    ran = [t for t in sparse if t is not None]
    held = sum(lb <= tr for tr, lb in ran)
    counts["sparse-stage2"] = (held, len(ran))
    ok &= held == len(ran) and len(ran) > 0
    record(4, ok, ", ".join(f"{v}: {h}/{m}" for v, (h, m) in counts.items())
           + f" (sparse runs with empty support: {200 - len(ran)})")
    assert ok


# --- 5 ------------------------------------------------------------------------

def test_criterion_05_trace_diagonal_lemma():
    rng = make_rng(5)
    held = 0
    for i in range(1000):
        d = int(rng.integers(1, 9))
        if i % 2:
            A = random_spd(d, (10.0 ** rng.uniform(-3, 0), 10.0 ** rng.uniform(0, 3)), seed=(5, i))
        else:
            G = rng.standard_normal((d + int(rng.integers(0, 4)), d))
            A = G.T @ G
        held += check_diag_trace_lemma(A).holds
    ok = held == 1000
    record(5, ok, f"{held}/1000 random SPD matrices (d <= 8)")
    assert ok


# --- 6 ------------------------------------------------------------------------

SPARSE_SIGMA = 0.5


@pytest.fixture(scope="module")
def sparse_run():
    cfg = ExperimentConfig(scenario="synthetic-sparse", variants=["random", "sparse"], d_values=[100, 200],
                           sparsity=7, n_factor=4, k_rule="sparse-log", k_constant=3.4, k1_fraction=2 / 3,
                           replications=100, seed=6, estimator="lasso", noise_sigma=SPARSE_SIGMA, beta_min=1.0)
    t0 = time.perf_counter()
    rep = run_experiment(cfg)
    return rep, time.perf_counter() - t0


def _containment_rate(d, s=7, reps=100):
    # misses of exact recovery split into dropped true coefficients and extra ones
    k = math.ceil(3.4 * s * math.log(d))
    k1 = round(2 * k / 3)
    spec = DistributionSpec(DistributionKind.GAUSSIAN, d)
    hits = 0
    for r in range(reps):
        model = make_model(d, s, seed=(60, d, r, 0), noise_sigma=SPARSE_SIGMA, min_abs=1.0)
        X = sample_observations(spec, 4 * d, (60, d, r, 1))
        y = gen_responses(X, ResponseSpec(model), (60, d, r, 2))
        b = fit_lasso(X[:k1], y[:k1], math.sqrt(16 * SPARSE_SIGMA ** 2 * math.log(d) / k1)).coefficients
        hits += set(model.support) <= set(np.flatnonzero(np.abs(b) > 1e-8))
    return hits / reps


def test_criterion_06a_support_recovery(sparse_run):
    rep, _ = sparse_run
    rates = {}
    for i, d in enumerate((100, 200)):
        recs = [r for r in rep.records if r["point"] == i and r["variant"] == "sparse" and r["status"] == "ok"]
        rates[d] = sum(r["support_recovered"] for r in recs) / 100.0
    ok = not rep.failures and all(v >= 0.9 for v in rates.values())
    record(6, ok, "(a) exact support recovery " + ", ".join(f"d={d}: {v:.2f}" for d, v in rates.items())
           + " (need >= 0.90); diagnostic, true support contained in the recovered one: "
           + ", ".join(f"d={d}: {_containment_rate(d):.2f}" for d in rates))
    assert ok


def test_criterion_06b_sparse_beats_random_lasso(sparse_run):
    rep, elapsed = sparse_run
    meds = {}
    ok = not rep.failures and elapsed <= 300.0
    for i, d in enumerate((100, 200)):
        ms, mr = float(np.median(rep.metrics(i, "sparse"))), float(np.median(rep.metrics(i, "random")))
        meds[d] = (ms, mr)
        ok &= ms < mr
    record(6, ok, "(b) median MSE two-stage vs random+lasso "
           + ", ".join(f"d={d}: {a:.3f} < {b:.3f}" for d, (a, b) in meds.items())
           + f"; runtime {elapsed:.1f}s (limit 300s)")
    assert ok


# --- 7 ------------------------------------------------------------------------

def test_criterion_07_ridge_bound():
    d, k, R, sigma, draws = 5, 50, 10.0, 1.0, 2000
    held = 0
    for design in range(50):
        rng = make_rng(7, design)
        X = rng.standard_normal((k, d))
        beta = rng.uniform(-1, 1, d)
        lam_min = float(np.linalg.eigvalsh(X.T @ X)[0])
        errs = np.empty(draws)
        for t in range(draws):
            lam = rng.uniform(0, R)
            y = X @ beta + sigma * rng.standard_normal(k)
            errs[t] = np.sum((fit_ridge(X, y, lam).coefficients - beta) ** 2)
        held += errs.mean() <= ridge_mse_bound(lam_min, R, sigma, d, float(beta @ beta))
    ok = held >= 0.95 * 50
    record(7, ok, f"bound held for {held}/50 designs (need >= 95%)")
    assert ok


# --- 8 ------------------------------------------------------------------------

def test_criterion_08_nonlinear_crossover():
    psis = [0.0] + list(np.geomspace(1e-3, 10.0, 9))
    cfg = ExperimentConfig(variants=["random", "fixed"], scenario="synthetic-nonlinear", d=10, n_values=[2500],
                           k_rule=50, psi_values=psis, replications=200, seed=8)
    rep = run_experiment(cfg)
    ratios = [_median_ratio(rep, i, "fixed", "random") for i in range(len(psis))]
    signs = np.sign(np.array(ratios) - 1.0)
    changes = int(np.sum(signs[1:] != signs[:-1]))
    ok = not rep.failures and ratios[0] < 1.0 and ratios[-1] > 1.0 and changes >= 1
    record(8, ok, "fixed/random median ratio by psi: "
           + ", ".join(f"{p:g}:{r:.2f}" for p, r in zip(psis, ratios)) + f"; sign changes {changes}")
    assert ok


# --- 9 ------------------------------------------------------------------------

def test_criterion_09_adaptive_vs_fixed():
    cfg = ExperimentConfig(variants=["fixed", "adaptive"], d=10, n_values=[2500], k_rule=50,
                           replications=200, seed=9)
    rep = run_experiment(cfg)
    r = _median_ratio(rep, 0, "adaptive", "fixed")
    ok = not rep.failures and r <= 1.05
    record(9, ok, f"median adaptive / median fixed = {r:.4f} (limit 1.05)")
    assert ok


# --- 10 -----------------------------------------------------------------------

def test_criterion_10_binomial_count():
    d, n, k, streams = 10, 2000, 100, 500
    rule = gaussian_threshold(d, n, k)
    spec = DistributionSpec(DistributionKind.GAUSSIAN, d)
    counts = np.empty(streams)
    exact_k = True
    for i in range(streams):
        xbar = sample_observations(spec, n, (10, i))
        counts[i] = np.count_nonzero(rule.selects(xbar))
        picked = select_fixed_stream(rule, xbar, k)
        exact_k &= picked.shape[0] == k and np.unique(picked).shape[0] == k
    tol = 3.0 * math.sqrt(k * (1 - k / n) / streams)
    ok = abs(counts.mean() - k) <= tol and exact_k
    record(10, ok, f"mean exceedances {counts.mean():.3f}, |mean - k| = {abs(counts.mean() - k):.3f} "
           f"<= {tol:.4f}; every run labeled exactly k: {exact_k}")
    assert ok


# --- 11 -----------------------------------------------------------------------

def _instance(seed, k, d):
    rng = make_rng(11, seed)
    X = rng.standard_normal((k, d))
    beta = rng.uniform(-2, 2, d)
    beta[rng.permutation(d)[: d // 2]] = 0.0
    return X, X @ beta + 0.5 * rng.standard_normal(k), rng


def test_criterion_11_estimator_oracles():
    worst = {"ols": 0.0, "ridge": 0.0, "lasso": 0.0, "lasso-objective": 0.0, "lasso-1d-grid": 0.0}
    for i in range(50):
        X, y, rng = _instance(i, 50, 5)
        worst["ols"] = max(worst["ols"], float(np.max(np.abs(fit_ols(X, y).coefficients - gradient_descent(X, y)))))
        lam = float(rng.uniform(0.1, 10.0))
        worst["ridge"] = max(worst["ridge"], float(np.max(np.abs(fit_ridge(X, y, lam).coefficients
                                                                  - gradient_descent(X, y, lam=lam)))))
        X, y, rng = _instance(1000 + i, 40, 10)
        lam = float(rng.uniform(0.05, 0.5)) * float(np.max(np.abs(X.T @ y))) / 40
        b = fit_lasso(X, y, lam).coefficients
        ref = lasso_fista(X, y, lam)
        worst["lasso"] = max(worst["lasso"], float(np.max(np.abs(b - ref))))
        worst["lasso-objective"] = max(worst["lasso-objective"],
                                       lasso_objective(X, y, b, lam) - lasso_objective(X, y, ref, lam))
        # orthonormal 1-d design: the fit must be the grid minimizer of 0.5 (b - b_ols)^2 + lam |b|
        b_ols, lam1 = float(rng.uniform(-2, 2)), float(rng.uniform(0, 1))
        x = np.ones((4, 1))
        got = fit_lasso(x, b_ols * np.ones(4), lam1).coefficients[0]
        worst["lasso-1d-grid"] = max(worst["lasso-1d-grid"], abs(got - lasso_grid_1d(b_ols, lam1)))
    limits = {"ols": 1e-5, "ridge": 1e-5, "lasso": 1e-6, "lasso-objective": 1e-8, "lasso-1d-grid": 2e-6}
    ok = all(worst[key] <= limits[key] for key in limits)
    record(11, ok, ", ".join(f"{key} {worst[key]:.2e} (<= {limits[key]:g})" for key in limits)
           + " over 50 instances each")
    assert ok
