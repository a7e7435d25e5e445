"""Replicated selection experiments: schedule, data, selectors, fits, metrics, summaries.

Records CSV columns (one row per schedule point x variant x replication):

``point``
    0-based schedule index.
``scenario``, ``n``, ``k``, ``d``, ``psi``
    Scenario name and the point's stream length, budget, dimension and
    nonlinearity.
``variant``, ``replication``
    Selector variant and 0-based replication index.
``status``
    ``ok`` or ``failed``.
``metric``
    Sigma-norm MSE ``(beta_hat - beta)^T Sigma (beta_hat - beta)`` for
    synthetic scenarios, mean squared held-out residual for CSV data.
``trace``
    ``Tr(Sigma (X^T X)^{-1})`` over the selected rows (synthetic, full design).
``lower_pointwise``
    ``d^2 / sum ||xbar_i||^2`` over the same rows.
``selected``
    Number of labels used.
``support_recovered``
    1 / 0 when the scenario is sparse, empty otherwise.
``error``
    Exception class and message for failed rows.

For CSV data, covariate columns that are constant on a replication's
training rows are dropped before selection and fitting.

Empty fields mean "not applicable". Floats are written with ``repr`` so equal
reports are byte-identical.

Summary JSON: ``{"config": ..., "cells": [...]}`` with one cell per
(point, variant) holding ``count``, ``failures``, ``mean``, ``median`` and
``q<p>`` for every configured quantile level. Quantiles are order statistics
at index ``ceil(p m)`` (1-based) of the ``m`` successful records; cells
without successes carry ``null`` statistics.
"""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np

from .datagen import (
    Dataset,
    DistributionKind,
    DistributionSpec,
    ResponseSpec,
    equicorrelation,
    gen_responses,
    make_model,
    make_rng,
    random_spd,
    sample_observations,
)
from .errors import ActiveRegError, DomainError, ParseError, ShapeError
from .estimators import FitMethod, LinearFit, LinearModel, fit_lasso, fit_ols, fit_ridge, lasso_regularization
from .numerics import as_sym, spd_solve
from .selectors import (
    LabeledStream,
    SparseConfig,
    adaptive_selector,
    run_sparse_two_stage,
    run_stream,
    select_adaptive_stream,
    select_fixed_stream,
)
from .thresholds import (
    ThresholdMethod,
    clt_threshold,
    gaussian_threshold,
    solve_threshold_empirical,
    zero_rule,
)
from .whitening import WhiteningTransform, fit_covariance_batch, whitening_from_covariance

# spawn-key slots that never collide with replication indices
_PILOT_KEY = 2 ** 31
_MODEL_SLOT, _X_SLOT, _NOISE_SLOT, _SPLIT_SLOT = 0, 1, 2, 3

RECORD_COLUMNS = ["point", "scenario", "n", "k", "d", "psi", "variant", "replication", "status",
                  "metric", "trace", "lower_pointwise", "selected", "support_recovered", "error"]


class Scenario(str, Enum):
    SYNTHETIC_LINEAR = "synthetic-linear"
    SYNTHETIC_NONLINEAR = "synthetic-nonlinear"
    SYNTHETIC_SPARSE = "synthetic-sparse"
    CSV_DATASET = "csv-dataset"


class Variant(str, Enum):
    RANDOM = "random"
    FIXED = "fixed"
    ADAPTIVE = "adaptive"
    ADAPTIVE_ONLINE = "adaptive-online"
    SPARSE = "sparse"
    SPARSE_ALL = "sparse-all"


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment; loadable from JSON.

    ``k_rule`` is ``"sqrt"`` (``k = ceil(sqrt(n))``), ``"sparse-log"``
    (``k = ceil(k_constant * s * log d)``) or a fixed integer. Synthetic
    points are ``n_values x psi_values``; sparse points take ``n = n_factor * d``
    for each entry of ``d_values``; CSV points are ``n_values`` training sizes.

    ``covariance`` is ``"identity"``, a nested list, or a mapping
    ``{"kind": "random", "eigenvalue_range": [lo, hi], "seed": s}`` /
    ``{"kind": "equicorrelation", "rho": r}``. For the copula it is the latent
    Gaussian correlation.
    """

    scenario: Scenario = Scenario.SYNTHETIC_LINEAR
    variants: List[str] = field(default_factory=lambda: ["random", "fixed"])
    d: int = 10
    n_values: List[int] = field(default_factory=lambda: [2500])
    k_rule: Union[str, int] = "sqrt"
    psi_values: List[float] = field(default_factory=lambda: [0.0])
    d_values: List[int] = field(default_factory=lambda: [100])
    sparsity: Optional[int] = None
    n_factor: int = 4
    k_constant: float = 3.4
    k1_fraction: float = 2.0 / 3.0
    replications: int = 200
    seed: int = 0
    estimator: FitMethod = FitMethod.OLS
    ridge_lambda: float = 1e-2
    lasso_lambda: Optional[float] = None
    noise_sigma: float = 1.0
    coefficient_range: List[float] = field(default_factory=lambda: [-5.0, 5.0])
    beta_min: float = 0.0
    distribution: DistributionKind = DistributionKind.GAUSSIAN
    covariance: object = "identity"
    threshold_method: ThresholdMethod = ThresholdMethod.GAUSSIAN_EXACT
    gamma_constant: float = 1.0
    epsilon: float = 0.0
    pilot_size: int = 20_000
    online_refresh: int = 10
    quantiles: List[List[float]] = field(default_factory=lambda: [[0.05, 0.95], [0.25, 0.75]])
    workers: int = 1
    paired: bool = True
    csv_path: Optional[str] = None
    response_column: Optional[str] = None
    centering: str = "full"

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        self.estimator = FitMethod(self.estimator)
        self.distribution = DistributionKind(self.distribution)
        self.threshold_method = ThresholdMethod(self.threshold_method)
        self.variants = [Variant(v).value for v in self.variants]
        if not self.variants:
            raise DomainError("at least one variant is required")
        if len(set(self.variants)) != len(self.variants):
            raise DomainError("variants must be distinct")
        if self.replications < 1:
            raise DomainError(f"replications must be at least 1, got {self.replications}")
        if self.centering not in ("full", "train"):
            raise DomainError(f"centering must be 'full' or 'train', got {self.centering!r}")
        for pair in self.quantiles:
            if len(pair) != 2 or not 0 <= pair[0] <= pair[1] <= 1:
                raise DomainError(f"quantile pair must satisfy 0 <= lo <= hi <= 1, got {pair}")
        sparse_variants = {Variant.SPARSE.value, Variant.SPARSE_ALL.value}
        if self.scenario is not Scenario.SYNTHETIC_SPARSE and sparse_variants & set(self.variants):
            raise DomainError("sparse variants need the synthetic-sparse scenario")
        if self.scenario is Scenario.CSV_DATASET:
            if not self.csv_path or not self.response_column:
                raise DomainError("csv-dataset scenario needs csv_path and response_column")
            if Variant.ADAPTIVE.value in self.variants:
                raise DomainError("the covariance of a CSV dataset is unknown; use adaptive-online")
        if self.scenario is Scenario.SYNTHETIC_SPARSE and self.sparsity is None:
            raise DomainError("synthetic-sparse scenario needs sparsity")
        for p in schedule(self):
            if not 0 < p.k < p.n:
                raise DomainError(f"need 0 < k < n at every point, got n={p.n}, k={p.k}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DomainError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, Enum):
                out[key] = value.value
        return out


@dataclass(frozen=True)
class SchedulePoint:
    index: int
    n: int
    k: int
    d: int
    psi: float = 0.0


def _budget(config: ExperimentConfig, n: int, d: int) -> int:
    rule = config.k_rule
    if rule == "sqrt":
        return math.ceil(math.sqrt(n))
    if rule == "sparse-log":
        return math.ceil(config.k_constant * config.sparsity * math.log(d))
    if isinstance(rule, str):
        raise DomainError(f"unknown k rule {rule!r}")
    return int(rule)


def schedule(config: ExperimentConfig) -> List[SchedulePoint]:
    points = []
    if config.scenario is Scenario.SYNTHETIC_SPARSE:
        for d in config.d_values:
            n = config.n_factor * d
            points.append((n, _budget(config, n, d), d, 0.0))
    elif config.scenario is Scenario.CSV_DATASET:
        for n in config.n_values:
            points.append((n, _budget(config, n, 0), 0, 0.0))
    else:
        psis = config.psi_values if config.scenario is Scenario.SYNTHETIC_NONLINEAR else [0.0]
        for n in config.n_values:
            for psi in psis:
                points.append((n, _budget(config, n, config.d), config.d, float(psi)))
    return [SchedulePoint(i, *p) for i, p in enumerate(points)]


@dataclass(eq=False)
class ExperimentReport:
    config: ExperimentConfig
    records: List[dict]
    summaries: List[dict] = field(default_factory=list)

    @property
    def failures(self) -> List[dict]:
        return [r for r in self.records if r["status"] != "ok"]

    def cell(self, point: int, variant: str) -> dict:
        for c in self.summaries:
            if c["point"] == point and c["variant"] == variant:
                return c
        raise KeyError((point, variant))

    def metrics(self, point: int, variant: str) -> np.ndarray:
        return np.array([r["metric"] for r in self.records
                         if r["point"] == point and r["variant"] == variant and r["status"] == "ok"])


# --- CSV ingestion ------------------------------------------------------------

def read_csv_dataset(path, response_column: str) -> Dataset:
    """Parse a header-first, comma-separated numeric file.

    Raises
    ------
    ParseError
        For a missing response column, ragged rows or non-numeric cells; the
        1-based data row and the column name are attached.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", row=0, column=None) from None
        if response_column not in header:
            raise ParseError(f"response column {response_column!r} not in header", row=0, column=response_column)
        rows = []
        for r, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise ParseError(f"row {r} has {len(cells)} cells, header has {len(header)}", row=r, column=None)
            values = []
            for name, cell in zip(header, cells):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r} at row {r}, column {name!r}",
                                     row=r, column=name) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite cell {cell!r} at row {r}, column {name!r}", row=r, column=name)
                values.append(v)
            rows.append(values)
    if not rows:
        raise ParseError("no data rows", row=0, column=None)
    data = np.array(rows)
    j = header.index(response_column)
    cols = [h for h in header if h != response_column]
    return Dataset(np.delete(data, j, axis=1), data[:, j], cols, response_column)


def split_dataset(data: Dataset, split, seed, centering: str = "full"):
    """Shuffle, split into (train, test) and center.

    ``split`` is a train fraction in ``(0, 1)``, a train size, or a pair
    ``(n_train, n_test)``. ``centering="full"`` subtracts means computed on
    every row; ``"train"`` uses the training rows only. Columns that are
    constant on the training rows are listed in ``degenerate_columns``.
    """
    m = data.n
    if isinstance(split, (tuple, list)):
        n_train, n_test = int(split[0]), int(split[1])
    elif isinstance(split, float) and not float(split).is_integer():
        if not 0 < split < 1:
            raise DomainError(f"train fraction must lie in (0, 1), got {split}")
        n_train = int(round(split * m))
        n_test = m - n_train
    else:
        n_train = int(split)
        n_test = m - n_train
    if n_train < 1 or n_test < 0 or n_train + n_test > m:
        raise DomainError(f"cannot take {n_train} train and {n_test} test rows from {m}")
    if centering not in ("full", "train"):
        raise DomainError(f"centering must be 'full' or 'train', got {centering!r}")
    perm = make_rng(*seed).permutation(m) if isinstance(seed, tuple) else make_rng(seed).permutation(m)
    tr, te = perm[:n_train], perm[n_train:n_train + n_test]
    X, y = data.X, data.y
    ref = slice(None) if centering == "full" else tr
    mx = X[ref].mean(axis=0)
    my = y[ref].mean()
    Xtr, Xte = X[tr] - mx, X[te] - mx
    cols = data.columns or [f"x{j}" for j in range(data.d)]
    flat = np.ptp(X[tr], axis=0) == 0
    Xtr[:, flat] = 0.0
    degenerate = [cols[j] for j in np.flatnonzero(flat)]
    train = Dataset(Xtr, y[tr] - my, cols, data.response_name, degenerate)
    test = Dataset(Xte, y[te] - my, cols, data.response_name, degenerate)
    return train, test


def load_csv_dataset(path, response_column: str, split=0.8, seed=0, centering: str = "full"):
    """Read a CSV file and return its shuffled, centered (train, test) split."""
    return split_dataset(read_csv_dataset(path, response_column), split, seed, centering)


# --- metrics ------------------------------------------------------------------

def mse_sigma_norm(fit, model: LinearModel, sigma_matrix) -> float:
    """``(beta_hat - beta)^T Sigma (beta_hat - beta)``; ``fit`` may be a fit or a vector."""
    coef = fit.coefficients if isinstance(fit, LinearFit) else np.asarray(fit, dtype=float)
    sig = np.asarray(sigma_matrix, dtype=float)
    d = model.beta.shape[0]
    if coef.shape != (d,) or sig.shape != (d, d):
        raise ShapeError(f"coefficients {coef.shape}, truth {model.beta.shape}, Sigma {sig.shape} do not match")
    delta = coef - model.beta
    return float(delta @ sig @ delta)


def trace_criterion(X_selected, sigma_matrix) -> float:
    """``Tr(Sigma (X^T X)^{-1})``."""
    x = np.asarray(X_selected, dtype=float)
    return float(np.trace(spd_solve(x.T @ x, np.asarray(sigma_matrix, dtype=float))))


# --- per-point context --------------------------------------------------------

@dataclass(eq=False)
class _PointContext:
    point: SchedulePoint
    sigma: Optional[np.ndarray] = None
    whitener: Optional[WhiteningTransform] = None
    rule: object = None
    spec: Optional[DistributionSpec] = None
    dataset: Optional[Dataset] = None


def _resolve_covariance(config: ExperimentConfig, d: int) -> np.ndarray:
    cov = config.covariance
    if cov is None or cov == "identity":
        return np.eye(d)
    if isinstance(cov, dict):
        kind = cov.get("kind")
        if kind == "random":
            return random_spd(d, cov.get("eigenvalue_range", (0.5, 4.0)), cov.get("seed", 0))
        if kind == "equicorrelation":
            return equicorrelation(d, cov["rho"])
        raise DomainError(f"unknown covariance kind {kind!r}")
    m = as_sym(np.array(cov, dtype=float))
    if m.shape != (d, d):
        raise ShapeError(f"covariance is {m.shape}, dimension is {d}")
    return m


def _make_rule(config: ExperimentConfig, d, n, k, whitened_pilot):
    method = config.threshold_method
    if method is ThresholdMethod.GAUSSIAN_EXACT:
        return gaussian_threshold(d, n, k, "exact", epsilon=config.epsilon)
    if method is ThresholdMethod.GAUSSIAN_CLOSED_FORM:
        return gaussian_threshold(d, n, k, "closed-form", c_bar=config.gamma_constant, epsilon=config.epsilon)
    if method is ThresholdMethod.CLT:
        m4 = np.mean(whitened_pilot ** 4, axis=0)
        return clt_threshold(d, n, k, m4, epsilon=config.epsilon)
    if method is ThresholdMethod.EMPIRICAL:
        return solve_threshold_empirical(whitened_pilot, k, n)
    return zero_rule(d)


def _needs_pilot(config: ExperimentConfig) -> bool:
    return config.threshold_method in (ThresholdMethod.CLT, ThresholdMethod.EMPIRICAL)


def _point_context(config: ExperimentConfig, p: SchedulePoint, dataset: Dataset = None) -> _PointContext:
    if config.scenario is Scenario.CSV_DATASET:
        return _PointContext(p, dataset=dataset)
    d = p.d
    spec = DistributionSpec(config.distribution, d, _resolve_covariance(config, d))
    pilot = None
    if spec.kind is DistributionKind.GAUSSIAN:
        sigma = spec.covariance
        whitener = whitening_from_covariance(sigma)
    elif spec.kind is DistributionKind.UNIFORM_WHITE:
        sigma = np.eye(d)
        whitener = WhiteningTransform.identity(d)
    else:
        # the copula's covariance has no closed form; a large pilot sample stands in
        pilot = sample_observations(spec, max(config.pilot_size, 50 * d), (config.seed, p.index, _PILOT_KEY))
        whitener = fit_covariance_batch(pilot)
        whitener = WhiteningTransform(whitener.rotation, whitener.scales, whitener.source)
        sigma = whitener.covariance()
    if _needs_pilot(config):
        if pilot is None:
            pilot = sample_observations(spec, max(config.pilot_size, 50 * d), (config.seed, p.index, _PILOT_KEY))
        pilot = whitener.apply(pilot)
    rule = _make_rule(config, d, p.n, p.k, pilot)
    return _PointContext(p, sigma, whitener, rule, spec)


# --- one replication ----------------------------------------------------------

def _fit(config: ExperimentConfig, X, y) -> LinearFit:
    est = config.estimator
    if est is FitMethod.OLS:
        return fit_ols(X, y)
    if est is FitMethod.RIDGE:
        return fit_ridge(X, y, config.ridge_lambda)
    lam = config.lasso_lambda
    if lam is None:
        lam = lasso_regularization(config.noise_sigma, X.shape[1], X.shape[0])
    return fit_lasso(X, y, lam)


def _record(config, p: SchedulePoint, variant: str, rep: int, **values) -> dict:
    rec = dict.fromkeys(RECORD_COLUMNS)
    rec.update(point=p.index, scenario=config.scenario.value, n=p.n, k=p.k, d=p.d, psi=p.psi,
               variant=variant, replication=rep, status="ok", error=None)
    rec.update(values)
    return rec


def _select(variant: str, ctx: _PointContext, config, X) -> np.ndarray:
    p = ctx.point
    if variant == Variant.RANDOM.value:
        return np.arange(p.k)
    if variant == Variant.ADAPTIVE_ONLINE.value:
        state = adaptive_selector(ctx.rule, p.n, p.k, online=True, refresh_every=config.online_refresh)
        run_stream(state, X)
        return np.asarray(state.selected_index, dtype=int)
    whitened = ctx.whitener.apply(X)
    if variant == Variant.FIXED.value:
        return select_fixed_stream(ctx.rule, whitened, p.k)
    if variant == Variant.ADAPTIVE.value:
        return select_adaptive_stream(ctx.rule, whitened, p.k)
    raise DomainError(f"variant {variant!r} is not a single-stage selector")


def _synthetic_data(config, ctx: _PointContext, rep: int, variant_index: int):
    p = ctx.point
    key = (config.seed, p.index, rep) if config.paired else (config.seed, p.index, variant_index, rep)
    s = config.sparsity if config.scenario is Scenario.SYNTHETIC_SPARSE else p.d
    model = make_model(p.d, s, tuple(config.coefficient_range), key + (_MODEL_SLOT,),
                       config.noise_sigma, config.beta_min)
    X = sample_observations(ctx.spec, p.n, key + (_X_SLOT,))
    y = gen_responses(X, ResponseSpec(model, p.psi), key + (_NOISE_SLOT,))
    return model, X, y


def _run_synthetic_variant(config, ctx: _PointContext, variant: str, model, X, y) -> dict:
    p = ctx.point
    sparse = config.scenario is Scenario.SYNTHETIC_SPARSE
    if variant in (Variant.SPARSE.value, Variant.SPARSE_ALL.value):
        k1 = int(round(config.k1_fraction * p.k))
        stream = LabeledStream(X, y)
        res = run_sparse_two_stage(stream, SparseConfig(
            k1, p.k - k1, config.noise_sigma, gamma_constant=config.gamma_constant,
            sigma_matrix=ctx.sigma, refit_all=variant == Variant.SPARSE_ALL.value,
            lasso_lambda=config.lasso_lambda))
        recovered = int(np.array_equal(res.support, model.support))
        return dict(metric=mse_sigma_norm(res.fit, model, ctx.sigma), selected=res.labels_used,
                    support_recovered=recovered)
    idx = _select(variant, ctx, config, X)
    Xs = X[idx]
    fit = _fit(config, Xs, y[idx])
    out = dict(metric=mse_sigma_norm(fit, model, ctx.sigma), selected=int(idx.shape[0]))
    if idx.shape[0] > p.d:
        xbar = whitening_from_covariance(ctx.sigma).apply(Xs)
        out["trace"] = trace_criterion(Xs, ctx.sigma)
        out["lower_pointwise"] = p.d * p.d / float(np.sum(xbar * xbar))
    if sparse:
        out["support_recovered"] = int(np.array_equal(np.flatnonzero(fit.coefficients), model.support))
    return out


def _run_csv_variant(config, ctx: _PointContext, variant: str, train: Dataset, test: Dataset) -> dict:
    p = ctx.point
    X = train.X
    if variant == Variant.FIXED.value:
        # covariates are unlabeled and free: whiten with the stream's own covariance
        whitener = fit_covariance_batch(X)
        whitener = WhiteningTransform(whitener.rotation, whitener.scales, whitener.source)
        pilot = whitener.apply(X) if _needs_pilot(config) else None
        rule = _make_rule(config, X.shape[1], p.n, p.k, pilot)
        sub = _PointContext(p, whitener=whitener, rule=rule)
        idx = _select(variant, sub, config, X)
    elif variant == Variant.ADAPTIVE_ONLINE.value:
        rule = _make_rule(config, X.shape[1], p.n, p.k, None) if not _needs_pilot(config) \
            else gaussian_threshold(X.shape[1], p.n, p.k)
        idx = _select(variant, _PointContext(p, rule=rule), config, X)
    else:
        idx = _select(variant, ctx, config, X)
    fit = _fit(config, X[idx], train.y[idx])
    resid = test.y - test.X @ fit.coefficients
    return dict(metric=float(resid @ resid / max(resid.shape[0], 1)), selected=int(idx.shape[0]))


def _drop_degenerate(split):
    """Remove columns that are constant on the training rows; they cannot be whitened."""
    train, test = split
    if not train.degenerate_columns:
        return split
    keep = [j for j, c in enumerate(train.columns) if c not in set(train.degenerate_columns)]
    cols = [train.columns[j] for j in keep]
    return (Dataset(train.X[:, keep], train.y, cols, train.response_name, train.degenerate_columns),
            Dataset(test.X[:, keep], test.y, cols, test.response_name, test.degenerate_columns))


def _run_replication(args) -> List[dict]:
    config, ctx, rep = args
    p = ctx.point
    out = []
    shared = None
    for vi, variant in enumerate(config.variants):
        try:
            if config.scenario is Scenario.CSV_DATASET:
                if shared is None or not config.paired:
                    key = (config.seed, p.index, rep) if config.paired else (config.seed, p.index, vi, rep)
                    shared = _drop_degenerate(split_dataset(ctx.dataset, (p.n, ctx.dataset.n - p.n),
                                                            key + (_SPLIT_SLOT,), config.centering))
                values = _run_csv_variant(config, ctx, variant, *shared)
            else:
                if shared is None or not config.paired:
                    shared = _synthetic_data(config, ctx, rep, vi)
                values = _run_synthetic_variant(config, ctx, variant, *shared)
            out.append(_record(config, p, variant, rep, **values))
        except (ActiveRegError, ArithmeticError, ValueError) as exc:
            out.append(_record(config, p, variant, rep, status="failed",
                               error=f"{type(exc).__name__}: {exc}"))
    return out


def run_experiment(config: ExperimentConfig, workers: int = None) -> ExperimentReport:
    """Run every (point, replication) and summarize.

    Replications are independent and may run in a process pool; results are
    merged in (point, replication, variant) order so the report does not depend
    on the worker count. Errors inside a replication become ``failed`` records.
    """
    workers = config.workers if workers is None else workers
    dataset = None
    if config.scenario is Scenario.CSV_DATASET:
        dataset = read_csv_dataset(config.csv_path, config.response_column)
    points = schedule(config)
    if dataset is not None:
        points = [SchedulePoint(p.index, p.n, p.k, dataset.d, p.psi) for p in points]
        for p in points:
            if p.n >= dataset.n:
                raise DomainError(f"training size {p.n} leaves no test rows in a {dataset.n}-row dataset")
    records = []
    for p in points:
        ctx = _point_context(config, p, dataset)
        jobs = [(config, ctx, rep) for rep in range(config.replications)]
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for chunk in pool.map(_run_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))):
                    records.extend(chunk)
        else:
            for job in jobs:
                records.extend(_run_replication(job))
    report = ExperimentReport(config, records)
    report.summaries = summarize_report(report, config.quantiles)
    return report


# --- summaries and output -------------------------------------------------------

def _quantile_key(p: float) -> str:
    return f"q{p:g}"


def summarize_report(report: ExperimentReport, quantile_pairs: Sequence[Sequence[float]] = ((0.05, 0.95),)) -> List[dict]:
    """Per (point, variant): count, failures, mean, median and order-statistic quantiles."""
    levels = sorted({float(q) for pair in quantile_pairs for q in pair})
    cells = {}
    for r in report.records:
        key = (r["point"], r["variant"])
        if key not in cells:
            cells[key] = {"point": r["point"], "n": r["n"], "k": r["k"], "d": r["d"], "psi": r["psi"],
                          "variant": r["variant"], "values": [], "failures": 0}
        if r["status"] == "ok":
            cells[key]["values"].append(r["metric"])
        else:
            cells[key]["failures"] += 1
    out = []
    for cell in cells.values():
        values = np.sort(np.array(cell.pop("values"), dtype=float))
        m = values.shape[0]
        cell["count"] = m
        cell["mean"] = float(values.mean()) if m else None
        cell["median"] = _order_stat(values, 0.5)
        for q in levels:
            cell[_quantile_key(q)] = _order_stat(values, q)
        out.append(cell)
    return out


def _order_stat(sorted_values: np.ndarray, p: float):
    m = sorted_values.shape[0]
    if m == 0:
        return None
    return float(sorted_values[min(max(math.ceil(p * m) - 1, 0), m - 1)])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in report.records:
        w.writerow([_fmt(r[c]) for c in RECORD_COLUMNS])
    return buf.getvalue()


def summary_json(report: ExperimentReport) -> str:
    return json.dumps({"config": report.config.to_dict(), "cells": report.summaries}, indent=2, sort_keys=True)


def write_records_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_csv(report))


def write_summary_json(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(summary_json(report) + "\n")
