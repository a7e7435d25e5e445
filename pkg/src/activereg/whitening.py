"""Covariance estimation (batch and streaming) and the whitening map.

With ``Sigma = U D U^T`` the whitened observation is ``D^{-1/2} U^T x``; for a
row-major design ``X`` the same map reads ``X U D^{-1/2}``. Covariances are
normalized by ``1/N`` (population moments), not ``1/(N-1)``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError, RankDeficiencyError, ShapeError, StateError
from .numerics import EigDecomposition, as_sym, eig_sym, require_spd


class WhiteningSource(str, Enum):
    EXACT = "exact"
    BATCH = "batch-estimated"
    ONLINE = "online-estimated"


@dataclass(frozen=True, eq=False)
class WhiteningTransform:
    """The map ``x -> D^{-1/2} U^T (x - center)``.

    ``scales`` are the eigenvalues of the covariance (the diagonal of ``D``),
    ``rotation`` is ``U``. ``center`` is zero for exact transforms, so those
    are linear; estimated transforms subtract the sample mean first.
    """

    rotation: np.ndarray
    scales: np.ndarray
    source: WhiteningSource = WhiteningSource.EXACT
    center: np.ndarray = None

    def __post_init__(self):
        if np.any(self.scales <= 0):
            raise DomainError("whitening scales must be positive")
        if self.center is None:
            object.__setattr__(self, "center", np.zeros(self.dim))

    @property
    def dim(self) -> int:
        return self.scales.shape[0]

    @property
    def condition_number(self) -> float:
        return float(self.scales.max() / self.scales.min())

    @property
    def matrix(self) -> np.ndarray:
        """``D^{-1/2} U^T``, so that ``whitened = matrix @ (x - center)``."""
        return self.rotation.T / np.sqrt(self.scales)[:, None]

    def covariance(self) -> np.ndarray:
        return (self.rotation * self.scales) @ self.rotation.T

    def apply(self, x) -> np.ndarray:
        """Whiten one observation (1-D) or a row-major batch (2-D)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"observation has dimension {x.shape[-1]}, transform expects {self.dim}")
        if not np.all(np.isfinite(x)):
            raise DomainError("observation has non-finite entries")
        return ((x - self.center) @ self.rotation) / np.sqrt(self.scales)

    def restrict(self, dims) -> "WhiteningTransform":
        """Whitening for the sub-covariance ``Sigma[dims][:, dims]``."""
        dims = np.asarray(dims, dtype=int)
        sub = self.covariance()[np.ix_(dims, dims)]
        t = whitening_from_covariance(sub, source=self.source)
        return WhiteningTransform(t.rotation, t.scales, self.source, self.center[dims])

    @classmethod
    def identity(cls, dim: int) -> "WhiteningTransform":
        return cls(np.eye(dim), np.ones(dim), WhiteningSource.EXACT)


def _from_eig(eig: EigDecomposition, source, center=None, what="covariance") -> WhiteningTransform:
    require_spd(eig, what)
    return WhiteningTransform(eig.eigenvectors, eig.eigenvalues.copy(), WhiteningSource(source), center)


def whitening_from_covariance(sigma, source=WhiteningSource.EXACT) -> WhiteningTransform:
    """Whitening transform for a known covariance matrix."""
    return _from_eig(eig_sym(as_sym(sigma)), source)


def sample_covariance(data) -> tuple:
    """Mean and ``1/N``-normalized covariance of the rows of ``data``."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D row-major array, got shape {x.shape}")
    mean = x.mean(axis=0)
    xc = x - mean
    return mean, (xc.T @ xc) / x.shape[0]


def fit_covariance_batch(data) -> WhiteningTransform:
    """Estimate the covariance of ``data`` and return the matching whitening transform.

    Raises
    ------
    RankDeficiencyError
        If the sample covariance is singular; ``null_directions`` lists the
        offending eigenvectors.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D row-major array, got shape {x.shape}")
    n, d = x.shape
    if n < d + 1:
        raise RankDeficiencyError(f"need at least d + 1 = {d + 1} rows to estimate a covariance, got {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("data has non-finite entries")
    mean, cov = sample_covariance(x)
    return _from_eig(eig_sym(cov), WhiteningSource.BATCH, mean, "sample covariance")


@dataclass
class OnlineCovarianceState:
    """Running mean and centered scatter matrix (Welford updates, O(d^2) per row).

    ``update`` mutates in place and returns ``self`` so calls can be chained;
    each stream owns its state.
    """

    dim: int
    count: int = 0
    mean: np.ndarray = None
    scatter: np.ndarray = None
    _eig: EigDecomposition = field(default=None, repr=False)

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self.scatter is None:
            self.scatter = np.zeros((self.dim, self.dim))

    def update(self, x) -> "OnlineCovarianceState":
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ShapeError(f"observation has shape {x.shape}, state expects ({self.dim},)")
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.scatter += np.outer(delta, x - self.mean)
        return self

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            raise StateError(f"covariance needs at least 2 observations, have {self.count}")
        return as_sym(self.scatter / self.count)

    def finalize(self) -> WhiteningTransform:
        """Whitening transform for the covariance of everything ingested so far.

        The previous eigenvectors warm-start the Jacobi iteration, which keeps
        repeated finalization along a stream cheap.
        """
        eig = eig_sym(self.covariance(), init=None if self._eig is None else self._eig.eigenvectors)
        self._eig = eig
        return _from_eig(eig, WhiteningSource.ONLINE, self.mean.copy(), "online covariance estimate")


def update_covariance_online(state: OnlineCovarianceState, x) -> OnlineCovarianceState:
    return state.update(x)


def apply_whitening(t: WhiteningTransform, x) -> np.ndarray:
    return t.apply(x)
