"""Streaming selection state machines.

* fixed: whiten, compare the weighted norm against a fixed ``Gamma``.
* adaptive: re-aim ``Gamma`` after every row at the rate
  ``(k - |S|) / (n - i + 1)``; optionally estimate the covariance online.
* sparse two-stage: label the first ``k1`` rows, recover a support with the
  lasso, then threshold on the whitened support coordinates.

Every variant switches to forced selection once the remaining stream
length equals the remaining budget, so a stream of length ``>= k`` always
ends with exactly ``k`` labels.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from .errors import BudgetError, RankDeficiencyError, ShapeError, StateError
from .estimators import LinearFit, fit_lasso, fit_ols, lasso_regularization
from .thresholds import (
    BudgetState,
    ThresholdMethod,
    ThresholdRule,
    adaptive_selection_quantile,
    gaussian_threshold,
    threshold_at_rate,
    zero_rule,
)
from .whitening import (
    OnlineCovarianceState,
    WhiteningTransform,
    fit_covariance_batch,
    whitening_from_covariance,
)


class SelectorVariant(str, Enum):
    FIXED = "fixed"
    ADAPTIVE = "adaptive"
    SPARSE_STAGE1 = "sparse-stage1"
    SPARSE_STAGE2 = "sparse-stage2"


@dataclass(frozen=True)
class SelectionDecision:
    selected: bool
    weighted_norm: float
    threshold_used: float
    forced: bool


@dataclass(eq=False)
class SelectorState:
    """Mutable state of one selector run over one stream.

    ``whitener`` is the known (or pre-estimated) whitening map; it is ``None``
    for raw-norm selection. With ``online`` set, the adaptive step feeds every
    seen row into the running covariance and whitens with the current
    estimate once ``warmup`` rows were seen, refreshing the eigendecomposition
    every ``refresh_every`` rows. Before warm-up rows are compared raw.
    """

    budget: BudgetState
    rule: ThresholdRule
    whitener: Optional[WhiteningTransform] = None
    online: Optional[OnlineCovarianceState] = None
    variant: SelectorVariant = SelectorVariant.FIXED
    warmup: int = 0
    refresh_every: int = 1
    selected_index: List[int] = field(default_factory=list)
    selected_raw: List[np.ndarray] = field(default_factory=list)
    selected_whitened: List[np.ndarray] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return self.budget.finished

    @property
    def dim(self) -> int:
        return self.rule.dim

    def selected_design(self) -> np.ndarray:
        return np.array(self.selected_raw).reshape(len(self.selected_raw), self.dim)


def fixed_selector(rule: ThresholdRule, n: Optional[int], k: int, whitener: WhiteningTransform = None,
                   online: bool = False, warmup: int = None, refresh_every: int = 1) -> SelectorState:
    """Fixed-threshold selector; ``n=None`` means the stream length is unknown.

    With ``online=True`` rows are whitened by the running covariance estimate
    (raw until ``warmup`` rows, default ``max(d + 1, 2 d)``, were seen).
    """
    return _selector(rule, n, k, whitener, online, warmup, refresh_every, SelectorVariant.FIXED)


def adaptive_selector(rule: ThresholdRule, n: int, k: int, whitener: WhiteningTransform = None,
                      online: bool = False, warmup: int = None, refresh_every: int = 1) -> SelectorState:
    """Adaptive selector; ``online=True`` estimates the covariance from the stream itself.

    The default warm-up is ``max(d + 1, 2 d)`` rows.
    """
    return _selector(rule, n, k, whitener, online, warmup, refresh_every, SelectorVariant.ADAPTIVE)


def _selector(rule, n, k, whitener, online, warmup, refresh_every, variant) -> SelectorState:
    d = rule.dim
    if online and whitener is not None:
        raise ValueError("pass either a known whitener or online=True, not both")
    return SelectorState(
        BudgetState(n, k), rule, whitener,
        online=OnlineCovarianceState(d) if online else None,
        variant=variant,
        warmup=max(d + 1, 2 * d) if warmup is None else warmup,
        refresh_every=max(1, int(refresh_every)),
    )


def _check_step(state: SelectorState, x) -> np.ndarray:
    if state.finished:
        raise StateError("selector already finished (budget or stream exhausted)")
    x = np.asarray(x, dtype=float)
    if x.shape != (state.dim,):
        raise ShapeError(f"observation has shape {x.shape}, selector expects ({state.dim},)")
    return x


def _decide(state: SelectorState, index: int, x, xbar, gamma: float) -> SelectionDecision:
    norm = math.sqrt(float(state.rule.weighted_sq_norm(xbar)))
    forced = state.budget.must_select_all
    selected = norm >= gamma or forced
    state.budget.seen_count += 1
    if selected:
        state.budget.selected_count += 1
        state.selected_index.append(index)
        state.selected_raw.append(x)
        state.selected_whitened.append(np.asarray(xbar, dtype=float))
    return SelectionDecision(bool(selected), norm, float(gamma), bool(forced))


def _refresh_online(state: SelectorState, x) -> None:
    if state.online is None:
        return
    state.online.update(x)
    count = state.online.count
    if count >= state.warmup and (state.whitener is None or (count - state.warmup) % state.refresh_every == 0):
        try:
            state.whitener = state.online.finalize()
        except RankDeficiencyError:
            pass


def step_fixed(state: SelectorState, x):
    """Decide on one observation with the rule's fixed threshold."""
    x = _check_step(state, x)
    _refresh_online(state, x)
    xbar = x if state.whitener is None else state.whitener.apply(x)
    index = state.budget.seen_count
    decision = _decide(state, index, x, xbar, state.rule.gamma)
    return state, decision


def step_adaptive(state: SelectorState, x):
    """Decide on one observation with a threshold re-aimed at the remaining budget."""
    x = _check_step(state, x)
    _refresh_online(state, x)
    xbar = x if state.whitener is None else state.whitener.apply(x)
    rate = adaptive_selection_quantile(state.budget)
    gamma = threshold_at_rate(state.rule, rate)
    index = state.budget.seen_count
    decision = _decide(state, index, x, xbar, gamma)
    return state, decision


def run_stream(state: SelectorState, rows, step: Callable = None) -> List[SelectionDecision]:
    """Feed ``rows`` through ``step`` until the selector finishes or rows run out."""
    if step is None:
        step = step_adaptive if state.variant is SelectorVariant.ADAPTIVE else step_fixed
    decisions = []
    for x in rows:
        if state.finished:
            break
        _, decision = step(state, x)
        decisions.append(decision)
    return decisions


# --- sparse two-stage -------------------------------------------------------

class LabeledStream:
    """Covariates visible up front, responses revealed one label at a time."""

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=float)
        self._y = np.asarray(y, dtype=float)
        if self._y.shape != (self.X.shape[0],):
            raise ShapeError("responses do not match covariate rows")
        self.labels_revealed = 0

    def __len__(self):
        return self.X.shape[0]

    def label(self, index) -> np.ndarray:
        index = np.atleast_1d(np.asarray(index, dtype=int))
        self.labels_revealed += index.shape[0]
        return self._y[index]


@dataclass
class SparseConfig:
    """Budgets and constants of the two-stage selector.

    ``sigma_matrix`` supplies the exact covariance for stage-two whitening;
    without it the stage-one rows are used to estimate ``Sigma_SS``.
    ``lasso_lambda`` overrides the default penalty
    ``lasso_regularization(sigma, d, k1)``.
    """

    k1: int
    k2: int
    sigma: float
    support_threshold: float = 1e-8
    gamma_constant: float = 1.0
    sigma_matrix: Optional[np.ndarray] = None
    refit_all: bool = False
    lasso_lambda: Optional[float] = None


@dataclass(eq=False)
class SparseResult:
    support: np.ndarray
    stage1_fit: LinearFit
    stage2_index: np.ndarray
    fit: LinearFit
    rule: ThresholdRule
    lasso_lambda: float
    degenerate: bool = False
    labels_used: int = 0
    stage2_whitened: Optional[np.ndarray] = None

    @property
    def selected_index(self) -> np.ndarray:
        k1 = self.stage1_fit.design_rows
        return np.concatenate([np.arange(k1), self.stage2_index])


def run_sparse_two_stage(stream: LabeledStream, config: SparseConfig) -> SparseResult:
    """Two-stage selection for sparse models.

    Stage one labels rows ``0 .. k1-1`` and fits the lasso; coefficients with
    magnitude above ``support_threshold`` form the support ``S``. Stage two
    whitens the ``S`` coordinates of each later row, selects on the unit-weight
    norm against ``gamma_constant * sqrt(s + 2 log(n2 / k2))`` and fits OLS on
    the stage-two rows in the ``S`` coordinates (all ``k`` rows when
    ``refit_all``). An empty support falls back to random sampling for stage
    two and a lasso on all labeled rows; the result is flagged ``degenerate``.
    """
    X = stream.X
    n, d = X.shape
    k1, k2 = int(config.k1), int(config.k2)
    if k1 < 1 or k2 < 1 or k1 + k2 > n:
        raise BudgetError(f"need k1, k2 >= 1 and k1 + k2 <= n; got k1={k1}, k2={k2}, n={n}")
    stage1 = np.arange(k1)
    y1 = stream.label(stage1)
    lam = config.lasso_lambda if config.lasso_lambda is not None else lasso_regularization(config.sigma, d, k1)
    lasso = fit_lasso(X[stage1], y1, lam)
    support = np.flatnonzero(np.abs(lasso.coefficients) > config.support_threshold)
    n2 = n - k1

    if support.shape[0] == 0:
        stage2 = np.arange(k1, k1 + k2)
        y2 = stream.label(stage2)
        rows = np.arange(k1 + k2)
        lam_all = (config.lasso_lambda if config.lasso_lambda is not None
                   else lasso_regularization(config.sigma, d, k1 + k2))
        fit = fit_lasso(X[rows], np.concatenate([y1, y2]), lam_all)
        return SparseResult(support, lasso, stage2, fit, zero_rule(d), lam, degenerate=True,
                            labels_used=stream.labels_revealed)

    s = support.shape[0]
    if k2 <= s:
        raise BudgetError(f"stage-two budget k2={k2} does not exceed the recovered support size {s}")
    if config.sigma_matrix is not None:
        sig = np.asarray(config.sigma_matrix, dtype=float)
        whitener = whitening_from_covariance(sig[np.ix_(support, support)])
    else:
        whitener = fit_covariance_batch(X[stage1][:, support])
    local_rule = gaussian_threshold(s, n2, k2, mode="closed-form", c_bar=config.gamma_constant)
    weights = np.zeros(d)
    weights[support] = 1.0
    rule = ThresholdRule(weights, local_rule.gamma, ThresholdMethod.GAUSSIAN_CLOSED_FORM,
                         phi=local_rule.phi, rate=local_rule.rate, meta=dict(local_rule.meta))

    state = SelectorState(BudgetState(n2, k2), local_rule, whitener, variant=SelectorVariant.SPARSE_STAGE2)
    for i in range(k1, n):
        if state.finished:
            break
        step_fixed(state, X[i, support])
    stage2 = k1 + np.asarray(state.selected_index, dtype=int)
    y2 = stream.label(stage2)
    if config.refit_all:
        fit = fit_ols(np.vstack([X[stage1], X[stage2]]), np.concatenate([y1, y2]), dims=support)
    else:
        fit = fit_ols(X[stage2], y2, dims=support)
    return SparseResult(support, lasso, stage2, fit, rule, lam, labels_used=stream.labels_revealed,
                        stage2_whitened=np.array(state.selected_whitened))


# --- whole-stream fast paths --------------------------------------------------

def select_fixed_stream(rule: ThresholdRule, whitened_rows, k: int) -> np.ndarray:
    """Indices chosen by the fixed selector over a fully materialized stream.

    Same decisions as feeding ``step_fixed`` row by row, computed with array
    operations: threshold exceedances are taken in order until either the
    budget fills or the remaining stream length meets the remaining budget,
    after which every row is taken.
    """
    xbar = np.asarray(whitened_rows, dtype=float)
    n = xbar.shape[0]
    if k > n:
        raise BudgetError(f"budget k={k} exceeds stream length n={n}")
    norms = np.sqrt(rule.weighted_sq_norm(xbar))
    exceed = norms >= rule.gamma
    before = np.concatenate([[0], np.cumsum(exceed)[:-1]])
    remaining_stream = n - np.arange(n)
    forced_at = np.flatnonzero(k - before == remaining_stream)
    start_forced = forced_at[0] if forced_at.size else n
    picked = np.flatnonzero(exceed[:start_forced])[:k]
    if picked.size < k:
        picked = np.concatenate([picked, np.arange(start_forced, start_forced + k - picked.size)])
    return picked


def select_adaptive_stream(rule: ThresholdRule, whitened_rows, k: int) -> np.ndarray:
    """Indices chosen by the adaptive selector with a known whitening map.

    Matches ``step_adaptive`` without online covariance estimation; only the
    scalar threshold recursion runs in Python.
    """
    xbar = np.asarray(whitened_rows, dtype=float)
    n = xbar.shape[0]
    if k > n:
        raise BudgetError(f"budget k={k} exceeds stream length n={n}")
    norms = np.sqrt(rule.weighted_sq_norm(xbar)).tolist()
    picked = []
    taken = 0
    for i, norm in enumerate(norms):
        left = k - taken
        remaining = n - i
        if left == remaining:
            picked.extend(range(i, n))
            break
        if norm >= threshold_at_rate(rule, left / remaining):
            picked.append(i)
            taken += 1
            if taken == k:
                break
    return np.asarray(picked, dtype=int)
