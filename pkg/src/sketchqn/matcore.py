"""Dense linear-algebra kernels and weighted norms.

All functions operate on plain ``numpy`` arrays in float64 and are pure:
inputs are never modified. Symmetric positive definite (SPD) arguments are
validated through factorization rather than eigenvalue scans.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, NotPositiveDefiniteError, NotSymmetricError

SYM_RTOL = 1e-12
SVD_TRUNCATION_TOL = 1e-8


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return (M + M') / 2 to suppress floating-point asymmetry drift."""
    return 0.5 * (m + m.T)


def assert_symmetric(m: np.ndarray, rtol: float = SYM_RTOL) -> np.ndarray:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"matrix is not square: {m.shape}")
    scale = np.abs(m).max()
    if scale > 0 and np.abs(m - m.T).max() > rtol * scale:
        raise NotSymmetricError(
            f"matrix is asymmetric beyond rtol={rtol}: "
            f"max |M - M'| = {np.abs(m - m.T).max():.3e}, scale {scale:.3e}"
        )
    return symmetrize(m)


def as_spd(m: np.ndarray, rtol: float = SYM_RTOL) -> np.ndarray:
    """Validate symmetry and positive definiteness; return the symmetrized copy."""
    m = assert_symmetric(m, rtol=rtol)
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Cholesky failed: {exc}") from exc
    return m


def is_spd(m: np.ndarray) -> bool:
    try:
        as_spd(m)
    except (NotSymmetricError, NotPositiveDefiniteError, DimensionError):
        return False
    return True


def weighted_fro_norm(w: np.ndarray, h: np.ndarray) -> float:
    """Frobenius norm of W in the metric of the SPD matrix H.

    Equals ``||H^{1/2} W H^{1/2}||_F = sqrt(trace(H W H W'))``.
    """
    w = as_matrix(w)
    h = as_matrix(h)
    if w.shape != h.shape or w.shape[0] != w.shape[1]:
        raise DimensionError(f"shape mismatch: W {w.shape}, H {h.shape}")
    # trace(H W H W') = sum_ij (HW)_ij (WH)_ij for symmetric H
    val = float(np.sum((h @ w) * (w @ h)))
    return np.sqrt(max(val, 0.0))


def local_norm(v: np.ndarray, h: np.ndarray) -> float:
    """The norm sqrt(<H v, v>) induced by the SPD matrix H."""
    v = as_vector(v)
    h = as_matrix(h)
    if h.shape != (v.size, v.size):
        raise DimensionError(f"shape mismatch: v {v.shape}, H {h.shape}")
    return np.sqrt(max(float(v @ (h @ v)), 0.0))


def spd_solve(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve H X = rhs for SPD H via Cholesky."""
    h = as_matrix(h)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != h.shape[0]:
        raise DimensionError(f"shape mismatch: H {h.shape}, rhs {rhs.shape}")
    try:
        c, low = scipy.linalg.cho_factor(symmetrize(h), check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"Cholesky failed: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)


def spd_sqrt(h: np.ndarray) -> np.ndarray:
    """Symmetric positive definite square root of an SPD matrix."""
    h = assert_symmetric(h)
    w, v = np.linalg.eigh(h)
    if w.min() <= 0:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite: lambda_min = {w.min():.3e}"
        )
    return symmetrize((v * np.sqrt(w)) @ v.T)


def sym_eig_min(m: np.ndarray, rtol: float = 1e-10) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    m = assert_symmetric(m, rtol=rtol)
    return float(np.linalg.eigvalsh(m)[0])


def reduced_svd(a: np.ndarray, tol: float = SVD_TRUNCATION_TOL):
    """Thin SVD with singular values <= tol * sigma_max dropped.

    Returns (U, s, V) with A ~= U @ diag(s) @ V.T, U and V having
    orthonormal columns and s strictly positive, sorted descending.
    A rank-0 input yields empty factors.
    """
    a = as_matrix(a)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        d, n = a.shape
        return np.empty((d, 0)), np.empty(0), np.empty((n, 0))
    r = int(np.sum(s > tol * s[0]))
    return u[:, :r], s[:r], vt[:r].T


def hilbert(d: int) -> np.ndarray:
    """The d x d matrix with entries 1/(i + j - 1), 1-based indices."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    i = np.arange(1, d + 1, dtype=float)
    return 1.0 / (i[:, None] + i[None, :] - 1.0)


def condition_number(a: np.ndarray) -> float:
    """Ratio of largest to smallest nonzero singular value of A."""
    a = as_matrix(a)
    s = np.linalg.svd(a, compute_uv=False)
    s = s[s > 0]
    if s.size == 0:
        raise ValueError("condition number of the zero matrix is undefined")
    return float(s[0] / s[-1])
