"""Objective oracles: value, gradient, Hessian sketch and full Hessian.

Each problem class exposes the same oracle surface:

    value(x) -> float
    gradient(x) -> (d,) array
    hess_sketch(x, S) -> H(x) @ S without forming H(x)
    full_hessian(x) -> (d, d) array, intended for small d
    data_matrix() -> d x n matrix whose columns are the sample vectors,
        used to build data-driven sketch directions

Hessian sketches are exact analytic products; finite differences appear
only in tests as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcore
from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class CurvatureBounds:
    """Empirical range [ell, u] of the per-sample loss curvature.

    Probe-set relative: the bounds hold over the queried arguments only,
    not globally (the global lower bound for logistic loss is 0).
    """

    ell: float
    u: float

    def __post_init__(self):
        if not (0 <= self.ell <= self.u):
            raise ValueError(f"need 0 <= ell <= u, got ell={self.ell}, u={self.u}")


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class QuadraticProblem:
    """f(x) = 0.5 ||A x||^2 with constant Hessian A'A."""

    def __init__(self, a: np.ndarray):
        self.a = matcore.as_matrix(a)
        self.dim = self.a.shape[1]

    def value(self, x: np.ndarray) -> float:
        r = self.a @ x
        return 0.5 * float(r @ r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.a.T @ (self.a @ x)

    def hess_sketch(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.a.T @ (self.a @ s)

    def full_hessian(self, x: np.ndarray) -> np.ndarray:
        return matcore.symmetrize(self.a.T @ self.a)

    def data_matrix(self) -> np.ndarray:
        # samples are the rows of A
        return self.a.T

    def curvature_bounds(self, xs) -> CurvatureBounds:
        return CurvatureBounds(1.0, 1.0)


class GlmProblem:
    """f(x) = (1/n) sum_i phi_i(<a_i, x>) + (reg/2) ||x||^2.

    a_i are the columns of the d x n matrix A. Supported losses:

    - "logistic": phi_i(t) = log(1 + exp(-b_i t)) with labels b_i in {-1, +1}
    - "square":   phi_i(t) = (t - b_i)^2 / 2, or t^2 / 2 without labels

    The L2 term is kept outside the inner-product form: it contributes
    reg * x to the gradient and reg * S to a Hessian sketch.
    """

    def __init__(self, a: np.ndarray, labels=None, link: str = "logistic", reg: float = 0.0):
        self.a = matcore.as_matrix(a)
        self.dim, self.n = self.a.shape
        if link not in ("logistic", "square"):
            raise ValueError(f"unknown link {link!r}")
        if reg < 0:
            raise ValueError(f"regularization must be >= 0, got {reg}")
        if labels is not None:
            labels = matcore.as_vector(labels)
            if labels.size != self.n:
                raise DimensionError(f"{labels.size} labels for {self.n} samples")
        if link == "logistic":
            if labels is None:
                raise ValueError("logistic loss requires labels")
            if not np.all(np.isin(labels, (-1.0, 1.0))):
                raise ValueError("logistic labels must be -1 or +1")
        self.labels = labels
        self.link = link
        self.reg = float(reg)

    def _margins(self, x: np.ndarray) -> np.ndarray:
        return self.a.T @ x

    def value(self, x: np.ndarray) -> float:
        t = self._margins(x)
        if self.link == "logistic":
            # log(1 + exp(-b t)) evaluated without overflow
            loss = np.logaddexp(0.0, -self.labels * t).sum()
        else:
            r = t - self.labels if self.labels is not None else t
            loss = 0.5 * float(r @ r)
        return loss / self.n + 0.5 * self.reg * float(x @ x)

    def _phi_prime(self, t: np.ndarray) -> np.ndarray:
        if self.link == "logistic":
            return -self.labels * _sigmoid(-self.labels * t)
        return t - self.labels if self.labels is not None else t

    def phi_second(self, t: np.ndarray) -> np.ndarray:
        """Per-sample curvature phi_i'' at the margins t."""
        if self.link == "logistic":
            sig = _sigmoid(self.labels * t)
            return sig * (1.0 - sig)
        return np.ones_like(t)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = self.a @ self._phi_prime(self._margins(x)) / self.n
        return g + self.reg * x

    def hess_sketch(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        w = self.phi_second(self._margins(x))
        ats = self.a.T @ s
        y = self.a @ (w[:, None] * ats if ats.ndim == 2 else w * ats)
        return y / self.n + self.reg * s

    def full_hessian(self, x: np.ndarray) -> np.ndarray:
        w = self.phi_second(self._margins(x))
        h = (self.a * w) @ self.a.T / self.n + self.reg * np.eye(self.dim)
        return matcore.symmetrize(h)

    def data_matrix(self) -> np.ndarray:
        return self.a

    def curvature_bounds(self, xs) -> CurvatureBounds:
        """Pointwise curvature range over the probe points.

        With reg > 0 the range is widened by n*reg / sigma^2 at the extreme
        singular values of A, which is the adjustment under which the
        svd-sketch rate bound ell/(u d) remains valid for the regularized
        Hessian (1/n) A Phi'' A' + reg I.
        """
        xs = list(xs)
        if not xs:
            raise ValueError("probe set must be nonempty")
        lo, hi = np.inf, -np.inf
        for x in xs:
            w = self.phi_second(self._margins(np.asarray(x, dtype=float)))
            lo = min(lo, float(w.min()))
            hi = max(hi, float(w.max()))
        if self.reg > 0:
            svals = np.linalg.svd(self.a, compute_uv=False)
            svals = svals[svals > 0]
            lo += self.n * self.reg / float(svals[0]) ** 2
            hi += self.n * self.reg / float(svals[-1]) ** 2
        return CurvatureBounds(lo, hi)

    def smoothness_constant(self, iters: int = 50, tol: float = 1e-6) -> float:
        """Gradient Lipschitz constant of the unregularized loss.

        For logistic loss this is lambda_max((1/(4n)) A A'), estimated by
        power iteration on u -> (1/n) A (c * (A' u)) with c the largest
        possible curvature (1/4 logistic, 1 square).
        """
        cmax = 0.25 if self.link == "logistic" else 1.0
        return cmax * _power_iteration(
            lambda u: self.a @ (self.a.T @ u) / self.n, self.dim, iters=iters, tol=tol
        )


class LogBarrierProblem:
    """f(x) = w <c, x> - sum_i log(b_i - <a_i, x>) on the open polytope Ax < b.

    a_i' are the rows of the n x d matrix A; w > 0 weights the linear term.
    """

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray, barrier_weight: float = 1.0):
        self.a = matcore.as_matrix(a)
        self.b = matcore.as_vector(b)
        self.c = matcore.as_vector(c)
        self.n, self.dim = self.a.shape
        if self.b.size != self.n or self.c.size != self.dim:
            raise DimensionError(
                f"shape mismatch: A {self.a.shape}, b {self.b.shape}, c {self.c.shape}"
            )
        if barrier_weight <= 0:
            raise ValueError(f"barrier weight must be > 0, got {barrier_weight}")
        self.barrier_weight = float(barrier_weight)

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return self.b - self.a @ x

    def in_domain(self, x: np.ndarray) -> bool:
        return bool(np.all(self.slacks(x) > 0))

    def _checked_slacks(self, x: np.ndarray) -> np.ndarray:
        s = self.slacks(x)
        if np.any(s <= 0):
            raise DomainError(f"point violates Ax < b: min slack {s.min():.3e}")
        return s

    def value(self, x: np.ndarray) -> float:
        s = self._checked_slacks(x)
        return self.barrier_weight * float(self.c @ x) - float(np.log(s).sum())

    def gradient(self, x: np.ndarray) -> np.ndarray:
        s = self._checked_slacks(x)
        return self.barrier_weight * self.c + self.a.T @ (1.0 / s)

    def hess_sketch(self, x: np.ndarray, s_mat: np.ndarray) -> np.ndarray:
        s = self._checked_slacks(x)
        w = 1.0 / s**2
        as_ = self.a @ s_mat
        return self.a.T @ (w[:, None] * as_ if as_.ndim == 2 else w * as_)

    def full_hessian(self, x: np.ndarray) -> np.ndarray:
        s = self._checked_slacks(x)
        return matcore.symmetrize((self.a.T / s**2) @ self.a)

    def data_matrix(self) -> np.ndarray:
        return self.a.T

    def curvature_bounds(self, xs) -> CurvatureBounds:
        """Range of per-constraint curvature 1/slack^2 over the probe points."""
        xs = list(xs)
        if not xs:
            raise ValueError("probe set must be nonempty")
        smin, smax = np.inf, -np.inf
        for x in xs:
            s = self._checked_slacks(np.asarray(x, dtype=float))
            smin = min(smin, float(s.min()))
            smax = max(smax, float(s.max()))
        return CurvatureBounds(1.0 / smax**2, 1.0 / smin**2)


def _power_iteration(matvec, dim: int, iters: int = 50, tol: float = 1e-6) -> float:
    v = np.ones(dim) / np.sqrt(dim)
    lam = 0.0
    for _ in range(iters):
        w = matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v_new = w / norm
        lam_new = float(v_new @ matvec(v_new))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new
        v, lam = v_new, lam_new
    return lam


def hessian_top_eigenvalue(problem, x: np.ndarray, iters: int = 50, tol: float = 1e-6) -> float:
    """Largest Hessian eigenvalue at x via power iteration on the sketch oracle."""
    return _power_iteration(
        lambda u: problem.hess_sketch(x, u), np.asarray(x).size, iters=iters, tol=tol
    )


def make_synthetic_logistic(d: int, n: int, seed: int = 0, reg: str | float = "auto") -> GlmProblem:
    """Random separable-ish logistic instance with labels from a noisy plane."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, n))
    truth = rng.standard_normal(d)
    flips = rng.random(n) < 0.05
    labels = np.sign(a.T @ truth + 0.1 * rng.standard_normal(n))
    labels[labels == 0] = 1.0
    labels[flips] *= -1.0
    problem = GlmProblem(a, labels=labels, link="logistic", reg=0.0)
    if reg == "auto":
        reg = 1e-3 * problem.smoothness_constant()
    return GlmProblem(a, labels=labels, link="logistic", reg=float(reg))


def make_random_polytope_barrier(d: int, n: int, seed: int = 0,
                                 barrier_weight: float = 1.0) -> LogBarrierProblem:
    """Barrier over random halfspaces a_i'x <= 1 plus a bounding box.

    The origin is strictly feasible and the box keeps the polytope bounded.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, d))
    b = np.ones(n)
    box = np.vstack([np.eye(d), -np.eye(d)])
    a = np.vstack([a, box])
    b = np.concatenate([b, 10.0 * np.ones(2 * d)])
    c = rng.standard_normal(d)
    c /= max(np.linalg.norm(c), 1.0)
    return LogBarrierProblem(a, b, c, barrier_weight=barrier_weight)
