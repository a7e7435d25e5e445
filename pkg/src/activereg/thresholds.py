"""Selection rules: weights ``xi`` and threshold ``Gamma`` for the weighted norm.

An observation ``x`` (already whitened) is selected when
``sum_j xi_j x_j^2 >= Gamma^2``. A rule is tuned so that a fraction ``k/n`` of
the stream clears the threshold, and (for the weights) so that every
coordinate has the same conditional second moment ``phi`` among selected
rows. Ties are selected (``>=``).

Rules carry their ``method`` so the threshold can be recomputed at a
different selection rate, which the adaptive selector does after every row.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import (
    BudgetError,
    DomainError,
    MomentInconsistencyError,
    SampleTooSmallError,
    StateError,
)
from .numerics import chi2_quantile, normal_quantile


class ThresholdMethod(str, Enum):
    GAUSSIAN_EXACT = "gaussian-exact"
    GAUSSIAN_CLOSED_FORM = "gaussian-closed-form"
    CLT = "clt"
    EMPIRICAL = "empirical"
    ZERO = "zero"


@dataclass(eq=False)
class ThresholdRule:
    """Weights, threshold and the conditional second moment they induce.

    ``rate`` is the target selection probability the threshold was solved
    for. ``meta`` holds method-specific extras: ``dof`` for chi-square
    rules, ``c_bar`` for the closed form, ``gamma_spread``/``mean`` for the
    CLT rule, ``sorted_norms`` and convergence diagnostics for empirical rules.
    """

    weights: np.ndarray
    gamma: float
    method: ThresholdMethod
    phi: Optional[float] = None
    rate: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.method = ThresholdMethod(self.method)
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise DomainError("weights must be finite and nonnegative")
        if not (self.gamma >= 0):
            raise DomainError(f"threshold must be nonnegative, got {self.gamma!r}")
        if (self.gamma == 0) != (self.method is ThresholdMethod.ZERO):
            raise DomainError("threshold is zero exactly for the zero (random sampling) rule")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)

    def weighted_sq_norm(self, xbar) -> np.ndarray:
        xbar = np.asarray(xbar, dtype=float)
        return (xbar * xbar) @ self.weights

    def selects(self, xbar) -> np.ndarray:
        return self.weighted_sq_norm(xbar) >= self.gamma ** 2

    def to_dict(self) -> dict:
        out = {
            "method": self.method.value,
            "gamma": self.gamma,
            "gamma_sq": self.gamma ** 2,
            "weights": self.weights.tolist(),
            "phi": self.phi,
            "rate": self.rate,
        }
        for key, value in self.meta.items():
            if key == "sorted_norms":
                continue
            out[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return out


def zero_rule(d: int) -> ThresholdRule:
    """``Gamma = 0``: every observation clears the threshold (random sampling)."""
    return ThresholdRule(np.ones(d), 0.0, ThresholdMethod.ZERO, phi=1.0, rate=1.0)


def _selection_rate(n, k, epsilon=0.0) -> float:
    if not (n > 0 and k > 0):
        raise BudgetError(f"need n > 0 and k > 0, got n={n}, k={k}")
    if k > n:
        raise BudgetError(f"budget k={k} exceeds stream length n={n}")
    if epsilon < 0:
        raise DomainError(f"budget inflation must be nonnegative, got {epsilon}")
    return min(1.0, k * (1.0 + epsilon) / n)


@lru_cache(maxsize=200_000)
def _chi2_gamma_sq(dof: int, rate: float) -> float:
    return chi2_quantile(dof, 1.0 - rate)


def gaussian_threshold(d: int, n, k, mode: str = "exact", c_bar: float = 1.0,
                       epsilon: float = 0.0) -> ThresholdRule:
    """Threshold for white Gaussian observations with unit weights.

    ``mode="exact"`` sets ``Gamma^2`` to the chi-square(d) quantile at
    ``1 - k/n``; ``mode="closed-form"`` uses ``c_bar * sqrt(d + 2 log(n/k))``,
    which never exceeds the exact value when ``c_bar = 1``. ``epsilon`` aims
    the rule at ``k (1 + epsilon)`` exceedances instead of ``k``.

    ``n == k`` is accepted: the exact rule degenerates to ``Gamma = 0`` and the
    closed form to ``sqrt(d)``.
    """
    if d < 1:
        raise DomainError(f"dimension must be positive, got {d}")
    rate = _selection_rate(n, k, epsilon)
    if mode == "exact":
        if rate >= 1.0:
            return zero_rule(d)
        g2 = _chi2_gamma_sq(int(d), rate)
        method = ThresholdMethod.GAUSSIAN_EXACT
        meta = {"dof": int(d)}
    elif mode == "closed-form":
        if c_bar <= 0:
            raise DomainError(f"c_bar must be positive, got {c_bar}")
        g2 = c_bar ** 2 * (d + 2.0 * math.log(1.0 / rate))
        method = ThresholdMethod.GAUSSIAN_CLOSED_FORM
        meta = {"dof": int(d), "c_bar": c_bar}
    else:
        raise DomainError(f"unknown Gaussian threshold mode {mode!r}")
    return ThresholdRule(np.ones(d), math.sqrt(g2), method, phi=g2 / d, rate=rate, meta=meta)


def clt_threshold(d: int, n, k, fourth_moments, weights=None, epsilon: float = 0.0) -> ThresholdRule:
    """Normal approximation to the law of the weighted squared norm.

    ``Gamma^2 = sum(xi) + Phi^{-1}(1 - k/n) * gamma`` with spread
    ``gamma = sqrt(sum_j xi_j^2 (E[x_j^4] - 1))``; ``sum(xi) = d`` for
    normalized weights. A non-positive ``Gamma^2`` (large ``k/n`` with a wide
    spread) degrades to the zero rule.
    """
    m4 = np.broadcast_to(np.asarray(fourth_moments, dtype=float), (d,))
    if np.any(m4 < 1.0):
        raise MomentInconsistencyError(
            f"fourth moments of white coordinates are at least 1; got min {m4.min():.4g}")
    w = np.ones(d) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (d,):
        raise DomainError(f"weights must have shape ({d},), got {w.shape}")
    rate = _selection_rate(n, k, epsilon)
    spread = math.sqrt(float(np.sum(w ** 2 * (m4 - 1.0))))
    mean = float(w.sum())
    meta = {"gamma_spread": spread, "mean": mean, "fourth_moments": m4.copy()}
    if rate >= 1.0:
        return ThresholdRule(w, 0.0, ThresholdMethod.ZERO, phi=1.0, rate=1.0, meta=meta)
    g2 = mean + normal_quantile(1.0 - rate) * spread
    if g2 <= 0:
        return ThresholdRule(w, 0.0, ThresholdMethod.ZERO, phi=1.0, rate=rate, meta=meta)
    return ThresholdRule(w, math.sqrt(g2), ThresholdMethod.CLT, phi=g2 / mean, rate=rate, meta=meta)


def empirical_quantile(values, p: float) -> float:
    """Order statistic at ``ceil(p * m)`` (1-based) of ``m`` values; lower interpolation."""
    v = np.sort(np.asarray(values, dtype=float))
    return float(_sorted_quantile(v, p))


def _sorted_quantile(sorted_values: np.ndarray, p: float) -> float:
    m = sorted_values.shape[0]
    idx = min(max(math.ceil(p * m) - 1, 0), m - 1)
    return sorted_values[idx]


def solve_threshold_empirical(sample, k, n, weight_iterations: int = 50,
                              max_phi_ratio: float = 1.1, min_exceedances: int = 10) -> ThresholdRule:
    """Fit ``(xi, Gamma)`` on a pilot sample of whitened rows.

    Alternates between setting ``Gamma^2`` to the empirical ``1 - k/n``
    quantile of the weighted squared norms and rescaling each weight by
    ``sqrt(mean(phi) / phi_j)`` (then renormalizing to ``sum(xi) = d``), where
    ``phi_j`` is the mean of ``x_j^2`` over rows above the threshold. Stops
    once ``max(phi) / min(phi) <= max_phi_ratio``; otherwise the returned rule
    has ``meta["converged"] = False``. The spread and ``min(phi)`` are always
    reported, since an approximate solution still controls the error through
    the smallest conditional moment.
    """
    x = np.asarray(sample, dtype=float)
    m, d = x.shape
    if m < 50 * d:
        raise SampleTooSmallError(f"pilot sample needs at least 50*d = {50 * d} rows, got {m}")
    rate = k / n
    if not 0 < rate < 1:
        raise DomainError(f"need 0 < k/n < 1, got {rate}")
    sq = x * x
    w = np.ones(d)
    converged = False
    for iteration in range(weight_iterations + 1):
        z = sq @ w
        g2 = empirical_quantile(z, 1.0 - rate)
        above = z >= g2
        count = int(above.sum())
        if count < min_exceedances:
            raise SampleTooSmallError(
                f"only {count} pilot rows at or above the threshold; need {min_exceedances}")
        phis = sq[above].mean(axis=0)
        ratio = float(phis.max() / phis.min()) if phis.min() > 0 else math.inf
        if ratio <= max_phi_ratio:
            converged = True
            break
        if iteration == weight_iterations:
            break
        w = w * np.sqrt(phis.mean() / phis)
        w *= d / w.sum()
    meta = {
        "converged": converged,
        "iterations": iteration,
        "phi_per_coord": phis,
        "phi_ratio": ratio,
        "phi_min": float(phis.min()),
        "sorted_norms": np.sort(z),
        "exceedances": count,
    }
    if g2 <= 0:
        raise SampleTooSmallError("empirical threshold collapsed to zero")
    return ThresholdRule(w, math.sqrt(g2), ThresholdMethod.EMPIRICAL, phi=float(phis.mean()),
                         rate=rate, meta=meta)


def threshold_at_rate(rule: ThresholdRule, rate: float) -> float:
    """``Gamma`` that the rule's method assigns to selection probability ``rate``."""
    if rate >= 1.0 or rule.method is ThresholdMethod.ZERO:
        return 0.0
    if rate <= 0.0:
        return math.inf
    method = rule.method
    if method is ThresholdMethod.GAUSSIAN_EXACT:
        return math.sqrt(_chi2_gamma_sq(rule.meta["dof"], rate))
    if method is ThresholdMethod.GAUSSIAN_CLOSED_FORM:
        return rule.meta["c_bar"] * math.sqrt(rule.meta["dof"] + 2.0 * math.log(1.0 / rate))
    if method is ThresholdMethod.CLT:
        g2 = rule.meta["mean"] + normal_quantile(1.0 - rate) * rule.meta["gamma_spread"]
        return math.sqrt(max(g2, 0.0))
    if method is ThresholdMethod.EMPIRICAL:
        return math.sqrt(max(_sorted_quantile(rule.meta["sorted_norms"], 1.0 - rate), 0.0))
    raise DomainError(f"cannot rescale a {method.value} rule")


@dataclass
class BudgetState:
    """Counters of a labeling run. ``n_total = None`` means the stream length is unknown."""

    n_total: Optional[int]
    k_total: int
    seen_count: int = 0
    selected_count: int = 0

    def __post_init__(self):
        if self.k_total < 1:
            raise BudgetError(f"budget must be at least 1, got {self.k_total}")
        if self.n_total is not None and self.k_total > self.n_total:
            raise BudgetError(f"budget k={self.k_total} exceeds stream length n={self.n_total}")

    @property
    def remaining_budget(self) -> int:
        return self.k_total - self.selected_count

    @property
    def remaining_stream(self) -> Optional[int]:
        return None if self.n_total is None else self.n_total - self.seen_count

    @property
    def finished(self) -> bool:
        return self.remaining_budget <= 0 or self.remaining_stream == 0

    @property
    def must_select_all(self) -> bool:
        """Remaining stream equals remaining budget: every further row is labeled."""
        return self.remaining_stream is not None and 0 < self.remaining_stream == self.remaining_budget


def adaptive_selection_quantile(b: BudgetState) -> float:
    """Probability of selection that spends the remaining budget on the remaining stream."""
    if b.n_total is None:
        raise StateError("adaptive thresholds need a known stream length")
    if b.seen_count >= b.n_total:
        raise StateError("stream exhausted")
    if b.selected_count >= b.k_total:
        raise StateError("budget exhausted")
    return min(1.0, max(0.0, b.remaining_budget / b.remaining_stream))


@dataclass(frozen=True)
class PhiEstimate:
    value: float
    floor: float
    stderr: float
    exceedances: int


def estimate_phi(rule: ThresholdRule, sample, min_exceedances: int = 30) -> PhiEstimate:
    """Monte-Carlo conditional second moment ``E[Z | Z >= Gamma^2] / sum(xi)``.

    ``floor`` is the analytic lower bound ``Gamma^2 / sum(xi)``.
    """
    z = rule.weighted_sq_norm(sample)
    above = z >= rule.gamma ** 2
    count = int(above.sum())
    if count < min_exceedances:
        raise SampleTooSmallError(f"{count} sample rows exceed the threshold; need {min_exceedances}")
    scale = float(rule.weights.sum())
    za = z[above]
    return PhiEstimate(
        value=float(za.mean() / scale),
        floor=rule.gamma ** 2 / scale,
        stderr=float(za.std() / math.sqrt(count) / scale),
        exceedances=count,
    )
