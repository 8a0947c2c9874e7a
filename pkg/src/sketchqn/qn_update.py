"""Inverse-Hessian estimate updates driven by Hessian sketches.

The sketched update consumes only S and Y = H @ S; the d x d Hessian is
never formed here. Cost is O(d^2 tau) per call through the tau x tau
factorization of M = S'Y.
"""

from __future__ import annotations

import numpy as np

from . import matcore
from .errors import DimensionError, RejectedSketch

# smallest Cholesky pivot of M relative to the largest before rejection
PIVOT_RTOL = 1e-12

# curvature threshold y's <= eps * |y| |s| below which the classic update is skipped
CURVATURE_EPS = 1e-10


def _factor_sketched_curvature(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cholesky factor of M = S'Y, rejecting singular or indefinite M."""
    m = matcore.symmetrize(s.T @ y)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise RejectedSketch(f"S'HS is not positive definite: {exc}") from exc
    pivots = np.diag(chol) ** 2
    if pivots.min() <= PIVOT_RTOL * pivots.max():
        raise RejectedSketch(
            f"S'HS is numerically singular: pivot ratio {pivots.min() / pivots.max():.3e}"
        )
    return chol


def _chol_solve(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    z = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, z)


def bfgs_update(b: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sketched inverse-BFGS update of the estimate B.

    Given a sketch S and its Hessian measurement Y = H @ S, returns
    G + (I - S M^{-1} Y') B (I - Y M^{-1} S') with M = S'Y and
    G = S M^{-1} S'. The result satisfies the sketched inverse secant
    identity B_new @ Y = S exactly (up to roundoff) and is symmetric.

    Raises RejectedSketch when M is singular or indefinite; the caller
    should redraw S.
    """
    b = np.asarray(b, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if y.ndim == 1:
        y = y[:, None]
    d = b.shape[0]
    if b.shape != (d, d) or s.shape[0] != d or s.shape != y.shape:
        raise DimensionError(f"shape mismatch: B {b.shape}, S {s.shape}, Y {y.shape}")

    chol = _factor_sketched_curvature(s, y)
    w = _chol_solve(chol, s.T)             # M^{-1} S',  tau x d
    g = s @ w                              # S M^{-1} S'
    t = _chol_solve(chol, y.T @ b)         # M^{-1} Y' B, tau x d
    eb = b - s @ t                         # (I - S M^{-1} Y') B
    ebe = eb - (eb @ y) @ w                # ... (I - Y M^{-1} S')
    return matcore.symmetrize(g + ebe)


def classic_bfgs_update(b: np.ndarray, s: np.ndarray, y: np.ndarray):
    """Standard inverse-BFGS update from a step s and gradient change y.

    Returns (B_new, updated). When the curvature y's is not safely positive
    the update is skipped and B is returned unchanged with updated = False.
    Coincides with bfgs_update(B, s, y) whenever y = H s exactly.
    """
    b = np.asarray(b, dtype=float)
    s = matcore.as_vector(s)
    y = matcore.as_vector(y)
    if b.shape != (s.size, s.size) or y.size != s.size:
        raise DimensionError(f"shape mismatch: B {b.shape}, s {s.shape}, y {y.shape}")

    ys = float(y @ s)
    if ys <= CURVATURE_EPS * np.linalg.norm(y) * np.linalg.norm(s):
        return b, False
    rho = 1.0 / ys
    v = b @ y
    # expanded (I - rho s y') B (I - rho y s') + rho s s'
    b_new = b - rho * (np.outer(s, v) + np.outer(v, s)) \
        + (rho**2 * float(y @ v) + rho) * np.outer(s, s)
    return matcore.symmetrize(b_new), True
