"""Dense complex linear algebra used throughout the simulator.

Besides thin wrappers around LAPACK (general inverse, 2-norm condition
number) this module holds the closed-form inverse of a tridiagonal matrix
built from the leading/trailing minor recursions, the Demko-Moss-Smith decay
bound for inverses of banded matrices and an empirical decay-rate fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

__all__ = [
    "SingularMatrixError",
    "RecursionBreakdownError",
    "TridiagonalAux",
    "DecayBound",
    "DecayFit",
    "as_complex_matrix",
    "invert_general",
    "is_tridiagonal",
    "tridiagonal_inverse",
    "invert_tridiagonal_or_general",
    "condition_number",
    "demko_constants",
    "demko_bound",
    "distance_profile",
    "fit_decay_rate",
]

PIVOT_RTOL = 1e-13
RECURSION_RTOL = 1e-13


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix is singular or too ill-conditioned to invert."""


class RecursionBreakdownError(ArithmeticError):
    """Raised when a minor recursion of the tridiagonal inverse collapses."""


@dataclass(frozen=True)
class TridiagonalAux:
    """Leading and trailing principal minors of a tridiagonal matrix.

    ``alpha[i]`` is the determinant of the leading ``i x i`` block
    (``alpha[0] = 1``) and ``beta[i - 1]`` the determinant of the trailing
    block starting at (1-based) row ``i`` (``beta[K] = 1``). Both arrays have
    ``K + 1`` entries.
    """

    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class DecayBound:
    lam: float
    C: float
    bandwidth_m: int
    cond: float

    def envelope(self, K: int) -> np.ndarray:
        """Return the ``K x K`` matrix ``C * lam**|i - j|``."""
        dist = np.abs(np.subtract.outer(np.arange(K), np.arange(K)))
        if self.lam == 0.0:
            return np.where(dist == 0, self.C, 0.0)
        return self.C * self.lam ** dist


@dataclass(frozen=True)
class DecayFit:
    rate_gamma: Optional[float]
    intercept_log_c: float
    num_points: int

    @property
    def base(self) -> Optional[float]:
        """Decay base ``exp(-rate_gamma)``, or None when the fit is absent."""
        if self.rate_gamma is None:
            return None
        return math.exp(-self.rate_gamma)


def as_complex_matrix(A, square: bool = True) -> np.ndarray:
    """Validate ``A`` and return it as a 2-D complex128 array."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def invert_general(A, pivot_rtol: float = PIVOT_RTOL) -> np.ndarray:
    """Invert a square complex matrix by LU with partial pivoting.

    Parameters
    ----------
    A : array_like
        Square matrix with finite entries.
    pivot_rtol : float
        Smallest accepted ``|u_kk| / max|A|`` for the pivots of the LU
        factorization.

    Raises
    ------
    SingularMatrixError
        If a pivot is below ``pivot_rtol`` relative to the largest entry.
    """
    A = as_complex_matrix(A)
    scale = np.max(np.abs(A))
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        # an exactly zero pivot is reported through the threshold below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= pivot_rtol * scale:
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below {pivot_rtol:g} relative threshold")
    eye = np.eye(A.shape[0], dtype=complex)
    return scipy.linalg.lu_solve((lu, piv), eye, check_finite=False)


def is_tridiagonal(A) -> bool:
    A = np.asarray(A)
    K = A.shape[0]
    if K < 3:
        return True
    far = np.abs(np.subtract.outer(np.arange(K), np.arange(K))) >= 2
    return not np.any(A[far])


def _check_minor(value: complex, running_max: float, name: str, idx: int) -> float:
    mag = abs(value)
    running_max = max(running_max, mag)
    if mag < RECURSION_RTOL * running_max:
        raise RecursionBreakdownError(
            f"|{name}[{idx}]| = {mag:.3e} fell below {RECURSION_RTOL:g} x running max")
    return running_max


def tridiagonal_inverse(H, mu: Optional[float] = None):
    """Closed-form inverse of a tridiagonal matrix.

    The matrix is read as ``H[i, i] = d_i``, ``H[i, i + 1] = mu a_i`` and
    ``H[i + 1, i] = mu b_{i+1}``; the attenuation ``mu`` is already carried
    by the entries, so the recursions work on the entries directly and
    ``mu`` only serves as a consistency check (``mu == 0`` demands a
    diagonal matrix).

    With ``c_i = H[i, i-1] H[i-1, i]`` (1-based) the minors obey::

        alpha_0 = 1, alpha_1 = d_1, alpha_i = d_i alpha_{i-1} - c_i alpha_{i-2}
        beta_{K+1} = 1, beta_K = d_K, beta_i = d_i beta_{i+1} - c_{i+1} beta_{i+2}

    The diagonal of the inverse is
    ``(d_i - c_{i+1} beta_{i+2}/beta_{i+1} - c_i alpha_{i-2}/alpha_{i-1})^-1``
    and the off-diagonal entries of column ``j`` follow from

        {H^-1}_ij = (-1)^(j-i) prod_{k=i}^{j-1} H[k, k+1] alpha_{i-1}/alpha_{j-1} {H^-1}_jj   (i < j)
        {H^-1}_ij = (-1)^(i-j) prod_{k=j+1}^{i} H[k, k-1] beta_{i+1}/beta_{j+1} {H^-1}_jj    (i > j)

    evaluated one step at a time away from the diagonal.

    Returns
    -------
    Hinv : ndarray
        The ``K x K`` inverse.
    aux : TridiagonalAux
        The minors ``alpha`` and ``beta``.

    Raises
    ------
    RecursionBreakdownError
        If any ``|alpha_i|`` or ``|beta_i|`` drops below ``1e-13`` times the
        running maximum of its sequence.
    """
    H = as_complex_matrix(H)
    K = H.shape[0]
    if not is_tridiagonal(H):
        raise ValueError("matrix is not tridiagonal")
    if mu is not None:
        if mu < 0:
            raise ValueError("mu must be nonnegative")
        if mu == 0 and K > 1 and (np.any(np.diag(H, 1)) or np.any(np.diag(H, -1))):
            raise ValueError("mu = 0 requires a diagonal matrix")

    d = np.diag(H).copy()
    up = np.diag(H, 1).copy()      # up[k] = H[k, k+1]
    low = np.diag(H, -1).copy()    # low[k] = H[k+1, k]
    # c[k] couples rows k and k+1 (0-based), i.e. c_{k+2} in 1-based form
    c = up * low

    alpha = np.empty(K + 1, dtype=complex)
    alpha[0] = 1.0
    alpha[1] = d[0]
    running = _check_minor(alpha[0], 0.0, "alpha", 0)
    running = _check_minor(alpha[1], running, "alpha", 1)
    for i in range(2, K + 1):
        alpha[i] = d[i - 1] * alpha[i - 1] - c[i - 2] * alpha[i - 2]
        running = _check_minor(alpha[i], running, "alpha", i)

    # beta[i - 1] holds 1-based beta_i, i = 1..K+1
    beta = np.empty(K + 1, dtype=complex)
    beta[K] = 1.0
    beta[K - 1] = d[K - 1]
    running = _check_minor(beta[K], 0.0, "beta", K + 1)
    running = _check_minor(beta[K - 1], running, "beta", K)
    for i in range(K - 2, -1, -1):
        beta[i] = d[i] * beta[i + 1] - c[i] * beta[i + 2]
        running = _check_minor(beta[i], running, "beta", i + 1)

    # Diagonal: 0-based row r uses alpha[r-1]/alpha[r] and beta[r+2]/beta[r+1]
    denom = d.copy()
    if K > 1:
        denom[:-1] -= c * beta[2:] / beta[1:-1]
        denom[1:] -= c * alpha[:-2] / alpha[1:-1]
    if np.any(np.abs(denom) == 0.0):
        raise RecursionBreakdownError("zero diagonal denominator")
    diag = 1.0 / denom

    Hinv = np.zeros((K, K), dtype=complex)
    Hinv[np.arange(K), np.arange(K)] = diag
    if K > 1:
        # step factors: X[r, j] = f[r] X[r+1, j] above, X[r, j] = g[r] X[r-1, j] below
        f = -up * alpha[:-2] / alpha[1:-1]        # rows 0..K-2
        g = -low * beta[2:] / beta[1:-1]          # rows 1..K-1, indexed r-1
        rows = np.arange(K)
        for off in range(1, K):
            r = rows[:K - off]
            Hinv[r, r + off] = f[r] * Hinv[r + 1, r + off]
            Hinv[r + off, r] = g[r + off - 1] * Hinv[r + off - 1, r]
    return Hinv, TridiagonalAux(alpha=alpha, beta=beta)


def invert_tridiagonal_or_general(H) -> tuple[np.ndarray, bool]:
    """Invert ``H`` by the closed form when tridiagonal, else by LU.

    Returns the inverse and a flag telling whether the closed form was used.
    A recursion breakdown falls back to :func:`invert_general`.
    """
    H = np.asarray(H, dtype=complex)
    if is_tridiagonal(H):
        try:
            Hinv, _ = tridiagonal_inverse(H)
        except RecursionBreakdownError:
            return invert_general(H), False
        if np.all(np.isfinite(Hinv)):
            return Hinv, True
    return invert_general(H), False


def condition_number(A) -> float:
    """2-norm condition number ``sigma_max / sigma_min`` (``inf`` if singular)."""
    A = as_complex_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= np.finfo(float).tiny or s[-1] <= s[0] * np.finfo(float).eps * 1e-3:
        return math.inf
    return float(s[0] / s[-1])


def demko_constants(cond: float, inv_norm: float, m: int) -> tuple[float, float]:
    """``(lambda, C)`` of the Demko bound from ``cond(A)``, ``||A^-1||_2``, ``m``.

    ``cond == 1`` returns ``(0, 0)``: the literal constant divides by
    ``lambda**m = 0``.
    """
    if m < 1:
        raise ValueError("bandwidth m must be >= 1")
    if not cond >= 1.0:
        raise ValueError("condition number must be >= 1")
    if math.isinf(cond):
        raise SingularMatrixError("infinite condition number")
    if cond == 1.0:
        return 0.0, 0.0
    lam = ((cond - 1.0) / (cond + 1.0)) ** (1.0 / m)
    C = ((m + 1) * lam ** (-m) * inv_norm * cond
         * max(1.0, ((1.0 + cond) / (math.sqrt(2.0) * cond)) ** 2))
    return lam, C


def demko_bound(A, m: int) -> DecayBound:
    """Entrywise decay envelope ``|{A^-1}_ij| <= C lam**|i-j|`` for banded ``A``."""
    A = as_complex_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    cond = condition_number(A)
    if math.isinf(cond):
        raise SingularMatrixError("matrix is singular")
    if cond - 1.0 <= 4 * np.finfo(float).eps:
        cond = 1.0
    lam, C = demko_constants(cond, 1.0 / s[-1], m)
    return DecayBound(lam=lam, C=C, bandwidth_m=m, cond=cond)


def distance_profile(A) -> np.ndarray:
    """Mean ``|A_ij|`` over all pairs with ``|i - j| = d``, for ``d = 0..K-1``."""
    A = np.abs(np.asarray(A))
    K = A.shape[0]
    prof = np.empty(K)
    for d in range(K):
        if d == 0:
            prof[d] = np.mean(np.diag(A))
        else:
            prof[d] = 0.5 * (np.mean(np.diag(A, d)) + np.mean(np.diag(A, -d)))
    return prof


def fit_decay_rate(A) -> DecayFit:
    """Fit ``log(mean |A_ij| at distance d) ~ log c - gamma d`` over ``d >= 1``.

    Distances whose mean magnitude is not above ``1e-300`` are skipped. The
    rate is absent when fewer than two distances remain.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    prof = distance_profile(A)
    dist = np.arange(len(prof))
    keep = (dist >= 1) & (prof > 1e-300)
    n = int(keep.sum())
    if n < 2:
        return DecayFit(rate_gamma=None, intercept_log_c=math.nan, num_points=n)
    slope, intercept = np.polyfit(dist[keep], np.log(prof[keep]), 1)
    return DecayFit(rate_gamma=max(0.0, float(-slope)),
                    intercept_log_c=float(intercept), num_points=n)
