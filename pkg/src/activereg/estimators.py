"""OLS, ridge and lasso fits on a labeled design, plus the ridge risk bound."""

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, RankDeficiencyError, ShapeError
from .numerics import eig_sym, require_spd


class ConvergenceWarning(UserWarning):
    pass


class FitMethod(str, Enum):
    OLS = "ols"
    RIDGE = "ridge"
    LASSO = "lasso"


@dataclass(eq=False)
class LinearFit:
    """Fitted coefficients in the full ambient dimension.

    When the fit was restricted to ``dims_used`` the remaining coefficients
    are exactly zero.
    """

    coefficients: np.ndarray
    method: FitMethod
    regularization: float
    design_rows: int
    dims_used: np.ndarray
    converged: bool = True
    info: dict = field(default_factory=dict)

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.coefficients


@dataclass(eq=False)
class LinearModel:
    """Ground truth ``y = x . beta + N(0, noise_sigma^2)``."""

    beta: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.noise_sigma < 0:
            raise DomainError(f"noise standard deviation must be nonnegative, got {self.noise_sigma}")

    @property
    def dim(self) -> int:
        return self.beta.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    @property
    def sparsity(self) -> int:
        return int(self.support.shape[0])


def _design(X, y, dims):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"design {X.shape} and responses {y.shape} do not match")
    d = X.shape[1]
    dims = np.arange(d) if dims is None else np.asarray(dims, dtype=int)
    return X, y, d, dims


def _embed(beta_sub, dims, d):
    beta = np.zeros(d)
    beta[dims] = beta_sub
    return beta


def fit_ols(X, y, dims=None) -> LinearFit:
    """Least squares through the origin (covariates and response are centered)."""
    X, y, d, dims = _design(X, y, dims)
    xs = X[:, dims]
    k, p = xs.shape
    if k <= p:
        raise RankDeficiencyError(f"OLS needs more rows than columns, got {k} rows for {p} columns")
    gram = xs.T @ xs
    xty = xs.T @ y
    eig = eig_sym(gram)
    require_spd(eig, "design Gram matrix")
    v = eig.eigenvectors
    beta = v @ ((v.T @ xty) / eig.eigenvalues)
    resid = float(np.max(np.abs(gram @ beta - xty)) / max(1.0, float(np.max(np.abs(xty)))))
    return LinearFit(_embed(beta, dims, d), FitMethod.OLS, 0.0, k, dims,
                     info={"normal_equation_residual": resid, "gram_condition": eig.condition_number})


def fit_ridge(X, y, lam: float, dims=None) -> LinearFit:
    """``(X^T X + lam I)^{-1} X^T y``; ``lam = 0`` falls back to OLS."""
    if not lam >= 0:
        raise DomainError(f"ridge penalty must be nonnegative, got {lam}")
    if lam == 0:
        return fit_ols(X, y, dims)
    X, y, d, dims = _design(X, y, dims)
    xs = X[:, dims]
    p = xs.shape[1]
    beta = np.linalg.solve(xs.T @ xs + lam * np.eye(p), xs.T @ y)
    return LinearFit(_embed(beta, dims, d), FitMethod.RIDGE, float(lam), xs.shape[0], dims)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, y, beta, lam) -> float:
    """``(1/2k) ||y - X beta||^2 + lam ||beta||_1``."""
    r = y - X @ beta
    return float(r @ r / (2.0 * X.shape[0]) + lam * np.sum(np.abs(beta)))


def lasso_kkt_violation(X, y, beta, lam) -> float:
    """Largest violation of the lasso subgradient conditions at ``beta``."""
    X = np.asarray(X, dtype=float)
    grad = X.T @ (y - X @ beta) / X.shape[0]
    active = beta != 0
    viol_active = np.abs(grad[active] - lam * np.sign(beta[active]))
    viol_zero = np.maximum(np.abs(grad[~active]) - lam, 0.0)
    return float(max(viol_active.max(initial=0.0), viol_zero.max(initial=0.0)))


def fit_lasso(X, y, lam: float, dims=None, tol: float = 1e-10, max_sweeps: int = 10_000,
              warm_start=None) -> LinearFit:
    """Cyclic coordinate descent on ``(1/2k) ||y - X beta||^2 + lam ||beta||_1``.

    Sweeps alternate between the full coordinate set and the current active
    set; the fit is accepted once a full sweep moves no coordinate by more
    than ``tol``. Hitting ``max_sweeps`` attaches ``converged=False`` and
    emits a :class:`ConvergenceWarning` instead of raising.
    """
    if not lam >= 0:
        raise DomainError(f"lasso penalty must be nonnegative, got {lam}")
    X, y, d, dims = _design(X, y, dims)
    xs = np.asfortranarray(X[:, dims])
    k, p = xs.shape
    if k < 1:
        raise ShapeError("lasso needs at least one row")
    col_sq = np.einsum("ij,ij->j", xs, xs) / k
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)[dims]
    resid = y - xs @ beta
    cols = [xs[:, j] for j in range(p)]

    def sweep(coords):
        nonlocal resid
        biggest = 0.0
        for j in coords:
            cj = col_sq[j]
            if cj == 0.0:
                continue
            old = beta[j]
            rho = cols[j] @ resid / k + cj * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / cj
            if new != old:
                resid -= cols[j] * (new - old)
                beta[j] = new
                biggest = max(biggest, abs(new - old))
        return biggest

    everything = range(p)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        if sweep(everything) < tol:
            converged = True
            break
        active = np.flatnonzero(beta)
        while sweeps < max_sweeps:
            sweeps += 1
            if sweep(active) < tol:
                break
    if not converged:
        warnings.warn(f"lasso did not converge in {max_sweeps} sweeps", ConvergenceWarning, stacklevel=2)
    return LinearFit(_embed(beta, dims, d), FitMethod.LASSO, float(lam), k, dims, converged=converged,
                     info={"sweeps": sweeps})


def lasso_regularization(sigma: float, d: int, k1: int) -> float:
    """Stage-one lasso penalty ``sqrt(4 sigma^2 log d / (gamma^2 k1))`` with ``gamma = 1/2``."""
    if d < 2:
        raise DomainError(f"ambient dimension must be at least 2 (log d > 0), got {d}")
    if k1 < 1:
        raise DomainError(f"need at least one stage-one row, got {k1}")
    return math.sqrt(16.0 * sigma ** 2 * math.log(d) / k1)


def ridge_mse_bound(lambda_min: float, R: float, sigma: float, d: int, beta_norm_sq: float) -> float:
    """Bound on ``E ||beta_hat - beta*||^2`` for a ridge penalty drawn uniformly from ``[0, R]``.

    ``lambda_min`` is the smallest eigenvalue of ``X^T X``. At ``lambda_min = 0``
    the bias factor takes its limit 1; for ``lambda_min >> R`` it is evaluated
    through its series ``u^2/3 - u^3/2 + 3u^4/5`` in ``u = R / lambda_min`` to
    avoid cancellation.
    """
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    if not lambda_min >= 0:
        raise DomainError(f"lambda_min must be nonnegative, got {lambda_min}")
    if math.isinf(lambda_min):
        return 0.0
    variance = sigma ** 2 * d / (lambda_min + R)
    if lambda_min == 0:
        bias = 1.0
    else:
        u = R / lambda_min
        if u < 1e-3:
            bias = u * u / 3.0 - u ** 3 / 2.0 + 0.6 * u ** 4
        else:
            bias = 1.0 - 2.0 / u * math.log1p(u) + 1.0 / (1.0 + u)
    return variance + beta_norm_sq * bias
