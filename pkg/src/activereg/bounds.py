"""Closed-form upper and lower bounds on ``Tr(Sigma (X^T X)^{-1})``.

Only the deterministic right-hand sides are evaluated. The high-probability
statements also involve constants ``c, C`` that depend on the subgaussian
norm of the selected distribution; those are never given numerical values
here and each report lists them under ``caveats``.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, StateError
from .estimators import ridge_mse_bound
from .numerics import as_sym, eig_sym, log_gamma, require_spd

DEFAULT_ALPHA = 0.05

_PROB_CAVEAT = ("holds with probability at least 1 - 2 exp(-c t^2), t = alpha sqrt(k) - C sqrt(d); "
                "c and C depend on the subgaussian norm and are not evaluated")
_GUMBEL_CAVEAT = ("uses the Gumbel limit of the maximum of n chi-square(d) norms as if exact "
                  "(large-n assumption; convergence error not evaluated)")


class BoundKind(str, Enum):
    UPPER_MAIN = "upper-main"
    UPPER_GAUSSIAN = "upper-gaussian"
    UPPER_SPARSE = "upper-sparse"
    LOWER_POINTWISE = "lower-pointwise"
    LOWER_GAUSSIAN = "lower-gaussian"
    LOWER_CLT = "lower-clt"
    RIDGE_F = "ridge-f"


@dataclass
class BoundReport:
    kind: BoundKind
    value: float
    parameters: dict
    caveats: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "value": self.value,
                "parameters": dict(self.parameters), "caveats": list(self.caveats)}


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def upper_bound_main(d: int, k: int, alpha: float, phi: float) -> BoundReport:
    """``d / ((1 - alpha)^2 phi k)`` for rows drawn from the thresholded distribution."""
    _check_alpha(alpha)
    if k <= d:
        raise DomainError(f"need k > d, got k={k}, d={d}")
    if not phi > 0:
        raise DomainError(f"phi must be positive, got {phi}")
    value = d / ((1.0 - alpha) ** 2 * phi * k)
    return BoundReport(BoundKind.UPPER_MAIN, value, {"d": d, "k": k, "alpha": alpha, "phi": phi},
                       [_PROB_CAVEAT])


def gaussian_log_factor_upper(d, k, n) -> float:
    return 2.0 * math.log(n / k) / d


def gaussian_log_factor_lower(d, n) -> float:
    return 2.0 * math.log(n) / d + math.log(math.log(n))


def upper_bound_gaussian(d: int, k: int, n: int, alpha: float = DEFAULT_ALPHA) -> BoundReport:
    """Main bound with the Gaussian gain ``phi = 1 + 2 log(n/k) / d``."""
    if n < k:
        raise DomainError(f"need n >= k, got n={n}, k={k}")
    factor = gaussian_log_factor_upper(d, k, n)
    rep = upper_bound_main(d, k, alpha, 1.0 + factor)
    rep.kind = BoundKind.UPPER_GAUSSIAN
    rep.parameters.update({"n": n, "log_factor": factor})
    return rep


def upper_bound_sparse(s: int, k2: int, n2: int, alpha: float = DEFAULT_ALPHA) -> BoundReport:
    """``s / ((1 - alpha)^2 (1 + 2 log(n2/k2)/s) k2)`` on the recovered support."""
    _check_alpha(alpha)
    if not (n2 >= k2 > s >= 1):
        raise DomainError(f"need n2 >= k2 > s >= 1, got s={s}, k2={k2}, n2={n2}")
    factor = 2.0 * math.log(n2 / k2) / s
    value = s / ((1.0 - alpha) ** 2 * (1.0 + factor) * k2)
    return BoundReport(BoundKind.UPPER_SPARSE, value,
                       {"s": s, "k2": k2, "n2": n2, "alpha": alpha, "log_factor": factor},
                       [_PROB_CAVEAT.replace("sqrt(k)", "sqrt(k2)").replace("sqrt(d)", "sqrt(s)"),
                        "requires exact support recovery (incoherence, eigenvalue and beta_min "
                        "conditions on Sigma, lambda, beta are assumed, not checked)"])


def lower_bound_pointwise(selected_whitened_rows) -> float:
    """``d^2 / sum_i ||xbar_i||^2`` over the selected whitened rows.

    This never exceeds ``Tr((Xbar^T Xbar)^{-1})`` when the Gram matrix is
    nonsingular (harmonic versus arithmetic mean of its eigenvalues).
    """
    x = np.asarray(selected_whitened_rows, dtype=float)
    if x.size == 0:
        raise StateError("no selected rows")
    x = np.atleast_2d(x)
    k, d = x.shape
    if k < d:
        raise DomainError(f"need at least d={d} rows, got {k}")
    return d * d / float(np.sum(x * x))


def lower_bound_gaussian(d: int, k: int, n: int, alpha: float = None) -> BoundReport:
    """Lower bound for Gaussian observations, valid for any selection algorithm.

    Without ``alpha`` the expectation form
    ``d / (k (2 log(n)/d + log log n))`` is returned. With ``alpha`` the
    high-probability form subtracts ``log log(1/(1-alpha)) / d`` and
    ``C = 2 log Gamma(d/2) / d`` from the denominator.

    A sharper derivation carries ``(d - 2) log log n`` where this form has
    ``d log log n``; the ``d`` form is used here.
    """
    if n < 3:
        raise DomainError(f"need n >= 3 so that log log n > 0, got {n}")
    factor = gaussian_log_factor_lower(d, n)
    params = {"d": d, "k": k, "n": n, "log_factor": factor}
    if alpha is None:
        denom = factor
    else:
        _check_alpha(alpha)
        c_gamma = 2.0 * log_gamma(d / 2.0) / d
        denom = factor - math.log(math.log(1.0 / (1.0 - alpha))) / d - c_gamma
        params.update({"alpha": alpha, "C": c_gamma})
    if denom <= 0:
        raise DomainError(f"bound denominator is not positive ({denom:.4g}); n is too small for d={d}")
    return BoundReport(BoundKind.LOWER_GAUSSIAN, d / (k * denom), params, [_GUMBEL_CAVEAT])


def lower_bound_clt(d: int, k: int, n: int, gamma: float) -> BoundReport:
    """``d / ((1 + gamma sqrt(2 log n) / d) k)`` when ``||x||^2 ~ N(d, gamma^2)``."""
    if gamma < 0:
        raise DomainError(f"CLT spread must be nonnegative, got {gamma}")
    if n < 2:
        raise DomainError(f"need n >= 2, got {n}")
    value = d / ((1.0 + gamma / d * math.sqrt(2.0 * math.log(n))) * k)
    return BoundReport(BoundKind.LOWER_CLT, value, {"d": d, "k": k, "n": n, "gamma": gamma},
                       ["treats the weighted squared norm as exactly normal (CLT approximation error ignored)"])


def ridge_bound_report(lambda_min: float, R: float, sigma: float, d: int, beta_norm_sq: float) -> BoundReport:
    value = ridge_mse_bound(lambda_min, R, sigma, d, beta_norm_sq)
    return BoundReport(BoundKind.RIDGE_F, value,
                       {"lambda_min": lambda_min, "R": R, "sigma": sigma, "d": d, "beta_norm_sq": beta_norm_sq},
                       ["bounds E over lambda* ~ U[0, R] and the noise, for a fixed design"])


@dataclass(frozen=True)
class DiagTraceCheck:
    holds: bool
    trace_inverse: float
    trace_diag_inverse: float


def check_diag_trace_lemma(a, rtol: float = 1e-12) -> DiagTraceCheck:
    """Compare ``Tr(A^{-1})`` with ``Tr(Diag(A)^{-1})`` for SPD ``A``.

    The verdict allows ``rtol`` relative slack so that diagonal inputs, where
    the two traces coincide, are not failed by summation-order rounding.
    """
    a = as_sym(a)
    eig = eig_sym(a)
    require_spd(eig)
    tr_inv = float(np.sum(1.0 / eig.eigenvalues))
    tr_diag = float(np.sum(1.0 / np.diag(a)))
    return DiagTraceCheck(tr_inv >= tr_diag * (1.0 - rtol), tr_inv, tr_diag)
