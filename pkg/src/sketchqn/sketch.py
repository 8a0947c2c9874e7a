"""Sketch distributions and sampling of sketching matrices.

A sketching matrix is a thin d x tau matrix S with full column rank used to
take linear measurements H @ S of a Hessian. Discrete distributions (coord,
svd, svd_no_sigma, fixed_direction, identity) can be enumerated exactly at
tau = 1, which is what makes exact expectation computations possible in the
diagnostics module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcore
from .errors import DimensionError, SketchQnError

KINDS = ("gauss", "coord", "svd", "svd_no_sigma", "fixed_direction", "identity")
_DISCRETE = ("coord", "svd", "svd_no_sigma", "fixed_direction", "identity")
_DIRECTION_KINDS = ("svd", "svd_no_sigma", "fixed_direction")

PROB_TOL = 1e-12


@dataclass(frozen=True)
class SketchSpec:
    """Immutable description of a sketching distribution.

    directions: matrix whose columns are the candidate sketch vectors
        (required for svd, svd_no_sigma and fixed_direction kinds).
    probabilities: per-column sampling weights, fixed_direction only;
        must be nonnegative and sum to 1.
    """

    kind: str
    tau: int = 1
    directions: np.ndarray | None = None
    probabilities: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sketch kind {self.kind!r}; expected one of {KINDS}")
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.kind in _DIRECTION_KINDS:
            if self.directions is None:
                raise ValueError(f"kind {self.kind!r} requires a directions matrix")
            dirs = matcore.as_matrix(self.directions)
            object.__setattr__(self, "directions", dirs)
            if np.linalg.matrix_rank(dirs) < dirs.shape[1]:
                raise ValueError("directions matrix is column-rank deficient")
        if self.kind == "fixed_direction":
            if self.tau != 1:
                raise ValueError("fixed_direction supports tau = 1 only")
            p = self.probabilities
            if p is None:
                ncols = self.directions.shape[1]
                p = np.full(ncols, 1.0 / ncols)
            p = np.asarray(p, dtype=float)
            if p.ndim != 1 or p.size != self.directions.shape[1]:
                raise DimensionError("probabilities must have one weight per direction column")
            if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
                raise ValueError("probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "probabilities", p)
        elif self.probabilities is not None:
            raise ValueError("probabilities are only meaningful for fixed_direction")

    def label(self) -> str:
        """Short name used in trace files and plot legends, e.g. 'svd_10'."""
        return f"{self.kind}_{self.tau}"


def sample(spec: SketchSpec, d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one sketching matrix S of shape (d, tau) from the distribution."""
    if spec.kind == "identity":
        return np.eye(d)
    if spec.kind == "gauss":
        tau = min(spec.tau, d)
        for _ in range(20):
            s = rng.standard_normal((d, tau))
            # full column rank holds almost surely; guard degenerate draws
            if np.linalg.matrix_rank(s) == tau:
                return s
        raise SketchQnError("gaussian sketch draws were persistently rank deficient")
    if spec.kind == "coord":
        if spec.tau > d:
            raise DimensionError(f"coord sketch tau={spec.tau} exceeds dimension {d}")
        idx = rng.choice(d, size=spec.tau, replace=False)
        s = np.zeros((d, spec.tau))
        s[idx, np.arange(spec.tau)] = 1.0
        return s
    dirs = spec.directions
    if dirs.shape[0] != d:
        raise DimensionError(f"directions are for dimension {dirs.shape[0]}, not {d}")
    if spec.kind in ("svd", "svd_no_sigma"):
        ncols = dirs.shape[1]
        if spec.tau > ncols:
            raise DimensionError(
                f"sketch tau={spec.tau} exceeds the {ncols} available directions"
            )
        idx = rng.choice(ncols, size=spec.tau, replace=False)
        return dirs[:, idx]
    # fixed_direction
    i = rng.choice(dirs.shape[1], p=spec.probabilities)
    return dirs[:, [i]]


def enumerate_outcomes(spec: SketchSpec, d: int) -> list[tuple[np.ndarray, float]]:
    """All (S, probability) outcomes of a discrete sketch distribution.

    Only identity and tau = 1 discrete kinds are enumerable; tau > 1 would
    enumerate binomially many subsets, which is refused.
    """
    if spec.kind == "identity":
        return [(np.eye(d), 1.0)]
    if spec.kind not in _DISCRETE:
        raise SketchQnError(f"kind {spec.kind!r} has no finite outcome set")
    if spec.tau != 1:
        raise SketchQnError(f"enumeration of {spec.kind!r} with tau={spec.tau} > 1 refused")
    if spec.kind == "coord":
        eye = np.eye(d)
        return [(eye[:, [i]], 1.0 / d) for i in range(d)]
    dirs = spec.directions
    if dirs.shape[0] != d:
        raise DimensionError(f"directions are for dimension {dirs.shape[0]}, not {d}")
    ncols = dirs.shape[1]
    if spec.kind in ("svd", "svd_no_sigma"):
        probs = np.full(ncols, 1.0 / ncols)
    else:
        probs = spec.probabilities
    return [(dirs[:, [i]], float(probs[i])) for i in range(ncols)]


def build_svd_directions(a: np.ndarray, tol: float = matcore.SVD_TRUNCATION_TOL,
                         with_sigma: bool = True) -> np.ndarray:
    """Sketch directions from the thin SVD of the data matrix A.

    Column i is U[:, i] / s[i] when with_sigma, else U[:, i]. Singular values
    below tol * sigma_max are dropped, so the column count is the numerical
    rank of A.
    """
    u, s, _ = matcore.reduced_svd(a, tol=tol)
    if s.size == 0:
        raise ValueError("data matrix has numerical rank 0; no sketch directions")
    return u / s if with_sigma else u


def fixed_direction_probabilities(directions: np.ndarray, upper_bound: np.ndarray) -> np.ndarray:
    """Sampling weights p_i = d_i' U d_i / trace(D' U D) for column set D.

    upper_bound is an SPD matrix dominating the Hessian everywhere; the
    weights favor directions in which the curvature budget is largest.
    """
    dirs = matcore.as_matrix(directions)
    u = matcore.as_spd(upper_bound)
    quad = np.einsum("ij,ij->j", dirs, u @ dirs)
    total = quad.sum()
    if total <= 0:
        raise ValueError("trace(D' U D) must be positive")
    return quad / total


def fixed_direction_spec(directions: np.ndarray, upper_bound: np.ndarray) -> SketchSpec:
    """Single-column sketch over given directions, weighted by curvature."""
    p = fixed_direction_probabilities(directions, upper_bound)
    return SketchSpec(kind="fixed_direction", tau=1, directions=directions, probabilities=p)
