"""Small dense numerical kernels: symmetric eigensolver, SPD helpers and quantiles.

Matrices in this package are small (d up to a few hundred), so the
eigensolver is a Jacobi iteration chosen for robustness. The
chi-square quantile inverts the regularized incomplete gamma function,
which is evaluated by its power series or its continued fraction.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericFailure, RankDeficiencyError, ShapeError

SPD_CUTOFF = 1e-12
QUANTILE_TOL = 1e-10
QUANTILE_MAX_ITER = 200
JACOBI_MAX_SWEEPS = 100
DENSE_ROTATION_MAX_DIM = 32


def as_sym(a) -> np.ndarray:
    """Return a finite, exactly symmetric float copy of the square matrix ``a``."""
    a = np.array(a, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class EigDecomposition:
    """Eigenvalues sorted descending, eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    @property
    def condition_number(self) -> float:
        lo = self.eigenvalues[-1]
        return math.inf if lo <= 0 else float(self.eigenvalues[0] / lo)


def _round_robin(d: int):
    """Pairings covering every (p, q) once per sweep, d // 2 disjoint pairs per round."""
    m = d + d % 2
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if max(p, q) < d]
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def eig_sym(a, init=None, max_sweeps: int = JACOBI_MAX_SWEEPS) -> EigDecomposition:
    """Eigendecomposition of a symmetric matrix by Jacobi rotations.

    Each sweep visits every off-diagonal pair once in round-robin order, so
    the rotations of one round touch disjoint rows and run as one array update.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Symmetric matrix; it is symmetrized before use.
    init : array_like, shape (d, d), optional
        Orthogonal warm start. The iteration is run on ``init.T @ a @ init``,
        which cuts the sweep count when ``a`` changed only slightly since
        ``init`` was computed (streaming covariance updates).
    max_sweeps : int
        Sweep cap before :class:`NumericFailure` is raised.
    """
    a = as_sym(a)
    d = a.shape[0]
    if init is None:
        v = np.eye(d)
    else:
        v = np.array(init, dtype=float)
        a = v.T @ a @ v
        a = 0.5 * (a + a.T)
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return EigDecomposition(np.zeros(d), v)
    tol = 1e-13 * fro
    iu = np.triu_indices(d, 1)
    rounds = _round_robin(d)
    for _ in range(max_sweeps):
        if math.sqrt(2.0 * float(np.sum(a[iu] ** 2))) <= tol:
            break
        for P, Q in rounds:
            apq = a[P, Q]
            zero = apq == 0.0
            theta = (a[Q, Q] - a[P, P]) / (2.0 * np.where(zero, 1.0, apq))
            t = np.copysign(1.0 / (np.abs(theta) + np.sqrt(theta * theta + 1.0)), theta)
            t[zero] = 0.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # disjoint pairs: the block rotation is applied to all of them at once
            if d <= DENSE_ROTATION_MAX_DIM:
                # small matrices: one dense product beats many indexed updates
                J = np.eye(d)
                J[P, P] = J[Q, Q] = c
                J[P, Q] = s
                J[Q, P] = -s
                a = J.T @ a @ J
                a[P, Q] = a[Q, P] = 0.0
                v = v @ J
                continue
            cp, cq = a[:, P], a[:, Q]
            a[:, P], a[:, Q] = c * cp - s * cq, s * cp + c * cq
            rp, rq = a[P, :], a[Q, :]
            a[P, :], a[Q, :] = c[:, None] * rp - s[:, None] * rq, s[:, None] * rp + c[:, None] * rq
            a[P, Q] = a[Q, P] = 0.0
            vp, vq = v[:, P], v[:, Q]
            v[:, P], v[:, Q] = c * vp - s * vq, s * vp + c * vq
    else:
        diag = np.abs(np.diag(a))
        cond = diag.max() / diag.min() if diag.min() > 0 else math.inf
        raise NumericFailure(
            f"Jacobi iteration did not converge in {max_sweeps} sweeps "
            f"(d={d}, estimated condition number {cond:.3g})"
        )
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return EigDecomposition(w[order], np.ascontiguousarray(v[:, order]))


def require_spd(eig: EigDecomposition, what: str = "matrix") -> None:
    """Raise :class:`RankDeficiencyError` unless ``lambda_min > 1e-12 * lambda_max``."""
    w = eig.eigenvalues
    top = w[0]
    if top <= 0:
        raise RankDeficiencyError(f"{what} is not positive definite (largest eigenvalue {top:.3g})",
                                  null_directions=eig.eigenvectors)
    bad = w <= SPD_CUTOFF * top
    if np.any(bad):
        raise RankDeficiencyError(
            f"{what} is rank deficient: {int(bad.sum())} eigenvalue(s) at or below "
            f"{SPD_CUTOFF:g} * lambda_max (lambda_min = {w[-1]:.3g})",
            null_directions=eig.eigenvectors[:, bad],
        )


def spd_inverse_trace(a) -> float:
    """Trace of the inverse of an SPD matrix, computed as ``sum(1 / eigenvalues)``."""
    eig = eig_sym(a)
    require_spd(eig)
    return float(np.sum(1.0 / eig.eigenvalues))


def spd_solve(a, b, eig: EigDecomposition = None) -> np.ndarray:
    if eig is None:
        eig = eig_sym(a)
    require_spd(eig)
    v = eig.eigenvectors
    return v @ ((v.T @ b) / eig.eigenvalues)


# --- incomplete gamma and chi-square -----------------------------------------

def _gamma_prefactor(a: float, x: float) -> float:
    return math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_series(a: float, x: float) -> float:
    ap = a
    term = total = 1.0 / a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            return total * _gamma_prefactor(a, x)
    raise NumericFailure(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h * _gamma_prefactor(a, x)
    raise NumericFailure(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_contfrac(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_contfrac(a, x)


def chi2_cdf(x: float, dof: int) -> float:
    return gammainc_lower(0.5 * dof, 0.5 * x)


def chi2_sf(x: float, dof: int) -> float:
    return gammainc_upper(0.5 * dof, 0.5 * x)


def chi2_pdf(x: float, dof: int) -> float:
    if x <= 0:
        return 0.0
    h = 0.5 * dof
    return math.exp((h - 1.0) * math.log(x) - 0.5 * x - h * math.log(2.0) - math.lgamma(h))


def _check_prob(p: float, allow_zero: bool) -> None:
    if not (p == p) or p >= 1.0 or p < 0.0 or (p == 0.0 and not allow_zero):
        raise DomainError(f"probability must lie in {'[0' if allow_zero else '(0'}, 1), got {p!r}")


def _invert_increasing(f, deriv, x0: float, lo: float, hi: float, what: str) -> float:
    """Safeguarded Newton on a bracket [lo, hi] with f(lo) <= 0 <= f(hi)."""
    x = min(max(x0, lo), hi)
    for _ in range(QUANTILE_MAX_ITER):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        slope = deriv(x)
        step_ok = False
        if slope > 0 and math.isfinite(slope):
            x_new = x - fx / slope
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        # absolute tolerance, relative below |x| = 1 so tiny quantiles keep their digits
        tol = QUANTILE_TOL * max(min(1.0, abs(x_new)), 1e-300)
        if abs(x_new - x) <= tol or hi - lo <= tol:
            return x_new
        x = x_new
    raise NumericFailure(f"{what}: root finding exceeded {QUANTILE_MAX_ITER} iterations")


def chi2_quantile(dof: int, p: float) -> float:
    """Inverse CDF of the chi-square distribution with ``dof`` degrees of freedom.

    >>> round(chi2_quantile(2, 0.95), 5)
    5.99146
    """
    if dof < 1 or int(dof) != dof:
        raise DomainError(f"degrees of freedom must be a positive integer, got {dof!r}")
    _check_prob(p, allow_zero=True)
    if p == 0.0:
        return 0.0
    dof = int(dof)
    if p <= 0.5:
        def f(x):
            return chi2_cdf(x, dof) - p
    else:
        tail = 1.0 - p

        def f(x):
            return tail - chi2_sf(x, dof)
    hi = max(float(dof), 1.0)
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise NumericFailure(f"chi2_quantile: could not bracket p={p} for dof={dof}")
    # Wilson-Hilferty starting point
    z = normal_quantile(p)
    c = 2.0 / (9.0 * dof)
    x0 = dof * max(1.0 - c + z * math.sqrt(c), 0.05) ** 3
    return _invert_increasing(f, lambda x: chi2_pdf(x, dof), x0, 0.0, hi,
                              f"chi2_quantile(dof={dof}, p={p})")


# --- normal -----------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / _SQRT2)


def normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF, odd-symmetric about ``p = 1/2`` by construction."""
    _check_prob(p, allow_zero=False)
    if p == 0.5:
        return 0.0
    tail = min(p, 1.0 - p)

    # find x >= 0 with upper tail probability equal to ``tail``
    def f(x):
        return tail - normal_sf(x)

    x0 = math.sqrt(-2.0 * math.log(tail))
    x = _invert_increasing(f, normal_pdf, x0, 0.0, 40.0, f"normal_quantile(p={p})")
    return x if p > 0.5 else -x


def log_gamma(x: float) -> float:
    return math.lgamma(x)
