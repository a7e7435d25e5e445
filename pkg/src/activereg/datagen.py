"""Seeded synthetic covariates, sparse linear models and responses.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=key)``; the key identifies one replication
stream (e.g. ``(point, replication)``), so streams are independent and
reproducible on every platform.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, ShapeError
from .estimators import LinearModel
from .numerics import as_sym, eig_sym, require_spd

LAPLACE_SCALE = 1.0 / math.sqrt(2.0)  # unit variance
UNIFORM_HALF_WIDTH = math.sqrt(3.0)  # unit variance


def make_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return make_rng(*seed)
    return make_rng(seed)


@dataclass(eq=False)
class Dataset:
    """Row-major covariates with optional responses."""

    X: np.ndarray
    y: Optional[np.ndarray] = None
    columns: Optional[list] = None
    response_name: Optional[str] = None
    degenerate_columns: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ShapeError(f"covariates must be 2-D, got shape {self.X.shape}")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != (self.X.shape[0],):
                raise ShapeError("responses do not match covariate rows")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


class DistributionKind(str, Enum):
    GAUSSIAN = "gaussian"
    LAPLACE_COPULA = "laplace-copula"
    UNIFORM_WHITE = "uniform-white"


@dataclass(eq=False)
class DistributionSpec:
    """Covariate law. ``covariance`` is the Gaussian covariance, or the latent
    Gaussian correlation for the copula; identity when omitted."""

    kind: DistributionKind
    dim: int
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.kind = DistributionKind(self.kind)
        if self.covariance is None:
            self.covariance = np.eye(self.dim)
        self.covariance = as_sym(self.covariance)
        if self.covariance.shape != (self.dim, self.dim):
            raise ShapeError(f"covariance shape {self.covariance.shape} does not match dim {self.dim}")
        if self.kind is not DistributionKind.UNIFORM_WHITE:
            require_spd(eig_sym(self.covariance), "covariance")

    def sqrt_covariance(self) -> np.ndarray:
        """Symmetric square root ``U D^{1/2} U^T``."""
        eig = eig_sym(self.covariance)
        v = eig.eigenvectors
        return (v * np.sqrt(eig.eigenvalues)) @ v.T


@dataclass(eq=False)
class ResponseSpec:
    model: LinearModel
    nonlinearity: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.nonlinearity):
            raise DomainError("nonlinearity must be finite")


def laplace_ppf(u, scale: float = LAPLACE_SCALE) -> np.ndarray:
    """Inverse CDF of the zero-mean Laplace distribution."""
    c = np.asarray(u, dtype=float) - 0.5
    return -scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))


def sample_observations(spec: DistributionSpec, n: int, seed) -> np.ndarray:
    if n < 1:
        raise DomainError(f"need at least one observation, got {n}")
    rng = _rng(seed)
    d = spec.dim
    if spec.kind is DistributionKind.UNIFORM_WHITE:
        return rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, size=(n, d))
    z = rng.standard_normal((n, d))
    cov = spec.covariance
    if not np.array_equal(cov, np.eye(d)):
        if spec.kind is DistributionKind.LAPLACE_COPULA:
            sd = np.sqrt(np.diag(cov))
            cov = cov / np.outer(sd, sd)
            z = z @ DistributionSpec(DistributionKind.GAUSSIAN, d, cov).sqrt_covariance()
        else:
            z = z @ spec.sqrt_covariance()
    if spec.kind is DistributionKind.GAUSSIAN:
        return z
    return laplace_ppf(ndtr(z))


def make_model(d: int, s: int, coefficient_range=(-5.0, 5.0), seed=0, noise_sigma: float = 1.0,
               min_abs: float = 0.0) -> LinearModel:
    """Random ``s``-sparse model with iid uniform nonzero coefficients.

    ``min_abs`` redraws coefficients until every nonzero has ``|beta_j| >= min_abs``
    (uniform on the range minus ``(-min_abs, min_abs)``).
    """
    if not 1 <= s <= d:
        raise DomainError(f"need 1 <= s <= d, got s={s}, d={d}")
    lo, hi = coefficient_range
    if max(abs(lo), abs(hi)) <= min_abs:
        raise DomainError("coefficient range excludes every value with |beta| >= min_abs")
    rng = _rng(seed)
    support = np.sort(rng.choice(d, size=s, replace=False))
    coefs = rng.uniform(lo, hi, size=s)
    bad = (np.abs(coefs) < min_abs) | (coefs == 0)
    while np.any(bad):
        coefs[bad] = rng.uniform(lo, hi, size=int(bad.sum()))
        bad = (np.abs(coefs) < min_abs) | (coefs == 0)
    beta = np.zeros(d)
    beta[support] = coefs
    return LinearModel(beta, noise_sigma)


def gen_responses(X, resp: ResponseSpec, seed) -> np.ndarray:
    """``y = X beta + psi * ||x||^2 + sigma * eps`` row by row."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != resp.model.dim:
        raise ShapeError(f"design shape {X.shape} does not match model dimension {resp.model.dim}")
    y = X @ resp.model.beta
    if resp.nonlinearity != 0.0:
        y = y + resp.nonlinearity * np.einsum("ij,ij->i", X, X)
    if resp.model.noise_sigma > 0:
        y = y + resp.model.noise_sigma * _rng(seed).standard_normal(X.shape[0])
    return y


def random_spd(d: int, eigenvalue_range: Sequence[float] = (0.5, 4.0), seed=0) -> np.ndarray:
    """Random covariance with a Haar-random eigenbasis and uniform spectrum in the range."""
    lo, hi = eigenvalue_range
    if not 0 < lo <= hi:
        raise DomainError(f"eigenvalue range must satisfy 0 < lo <= hi, got {eigenvalue_range}")
    rng = _rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    w = rng.uniform(lo, hi, size=d)
    return as_sym((q * w) @ q.T)


def equicorrelation(d: int, rho: float) -> np.ndarray:
    if not -1.0 / max(d - 1, 1) < rho < 1.0:
        raise DomainError(f"equicorrelation {rho} is not positive definite for d={d}")
    return (1.0 - rho) * np.eye(d) + rho * np.ones((d, d))
