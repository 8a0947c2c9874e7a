"""Convergence-theory quantities computed exactly or by Monte Carlo.

rho is the smallest eigenvalue of the expected sketch projection
E[H^{1/2} S (S'HS)^{-1} S' H^{1/2}], minimized over probe points. It is the
contraction modulus of the inverse-estimate error and drives the 1 - rho/2
rate of the combined Lyapunov potentials. Infima over probe sets are
reported as probe-relative, never as certified global values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcore, sketch
from .errors import RejectedSketch, SketchQnError
from .qn_update import _factor_sketched_curvature

DEFAULT_MC_SAMPLES = 10_000
MC_BATCHES = 10
GAP_RATIO_FLOOR = 1e-12


@dataclass(frozen=True)
class ExpectedProjection:
    matrix: np.ndarray
    method: str                  # "exact_enumeration" | "monte_carlo"
    samples: int
    std_err_fro: float | None    # Frobenius-norm standard error, Monte Carlo only


@dataclass(frozen=True)
class RhoReport:
    rho: float
    method: str
    samples: int
    std_err: float | None
    eval_points: list

    def __post_init__(self):
        if not -1e-10 <= self.rho <= 1 + 1e-10:
            raise ValueError(f"rho = {self.rho} outside [0, 1]")


@dataclass(frozen=True)
class LyapunovSample:
    """Potential values at one iterate: phi (local-norm form), psi (gap form)."""

    phi: float
    psi: float | None
    components: tuple  # (b_err_sq, x_err_local, f_gap_sqrt)


def _projection_for(sqrt_h: np.ndarray, h: np.ndarray, s: np.ndarray) -> np.ndarray:
    chol = _factor_sketched_curvature(s, h @ s)
    z = sqrt_h @ s
    w = np.linalg.solve(chol, z.T)
    return w.T @ w


def expected_projection_matrix(h: np.ndarray, spec: sketch.SketchSpec,
                               mc_samples: int = DEFAULT_MC_SAMPLES,
                               rng: np.random.Generator | None = None,
                               force_mc: bool = False):
    """E[Z] for the sketch projection Z at a fixed SPD matrix H.

    Uses exact enumeration whenever the distribution is enumerable,
    otherwise a Monte Carlo average with a batched standard-error estimate
    (force_mc skips enumeration, for convergence checks). Returns
    (ExpectedProjection, batch_means) where batch_means is None for the
    exact path.
    """
    h = matcore.as_spd(h)
    d = h.shape[0]
    sqrt_h = matcore.spd_sqrt(h)
    if force_mc:
        outcomes = None
    else:
        try:
            outcomes = sketch.enumerate_outcomes(spec, d)
        except (SketchQnError, ValueError):
            outcomes = None
    if outcomes is not None:
        total = np.zeros((d, d))
        for s, p in outcomes:
            total += p * _projection_for(sqrt_h, h, s)
        return ExpectedProjection(matcore.symmetrize(total), "exact_enumeration",
                                  len(outcomes), None), None

    if rng is None:
        rng = np.random.default_rng(0)
    per_batch = max(mc_samples // MC_BATCHES, 1)
    batch_means = []
    sum_all = np.zeros((d, d))
    sumsq_all = np.zeros((d, d))
    n_total = 0
    rejected = 0
    for _ in range(MC_BATCHES):
        acc = np.zeros((d, d))
        done = 0
        while done < per_batch:
            s = sketch.sample(spec, d, rng)
            try:
                z = _projection_for(sqrt_h, h, s)
            except RejectedSketch:
                rejected += 1
                if rejected > 100 * per_batch + 1000:
                    raise SketchQnError(
                        "sketch draws persistently rejected; S'HS is numerically "
                        "singular for this distribution and matrix")
                continue
            acc += z
            sum_all += z
            sumsq_all += z * z
            done += 1
        batch_means.append(acc / per_batch)
        n_total += done
    mean = sum_all / n_total
    var = np.maximum(sumsq_all / n_total - mean**2, 0.0)
    std_err = float(np.sqrt(var.sum() / n_total))
    return ExpectedProjection(matcore.symmetrize(mean), "monte_carlo",
                              n_total, std_err), batch_means


def expected_projection(problem, x: np.ndarray, spec: sketch.SketchSpec,
                        mc_samples: int = DEFAULT_MC_SAMPLES,
                        rng: np.random.Generator | None = None) -> ExpectedProjection:
    """E[Z] for the sketch projection at the problem's Hessian at x."""
    result, _ = expected_projection_matrix(problem.full_hessian(x), spec,
                                           mc_samples=mc_samples, rng=rng)
    return result


def rho_at(problem, points, spec: sketch.SketchSpec,
           mc_samples: int = DEFAULT_MC_SAMPLES,
           rng: np.random.Generator | None = None) -> RhoReport:
    """Probe-set infimum of lambda_min(E[Z]) with provenance.

    The reported value bounds the true infimum from above; it is exact on
    the probe set when the distribution is enumerable.
    """
    points = [np.asarray(p, dtype=float) for p in points]
    if not points:
        raise ValueError("probe set must be nonempty")
    best = np.inf
    best_std = None
    method = "exact_enumeration"
    samples = 0
    for x in points:
        ep, batches = expected_projection_matrix(problem.full_hessian(x), spec,
                                                 mc_samples=mc_samples, rng=rng)
        lam = matcore.sym_eig_min(ep.matrix)
        samples = max(samples, ep.samples)
        if ep.method == "monte_carlo":
            method = "monte_carlo"
        if lam < best:
            best = lam
            if batches is not None:
                lams = [matcore.sym_eig_min(matcore.symmetrize(m)) for m in batches]
                best_std = float(np.std(lams, ddof=1) / np.sqrt(len(lams)))
            else:
                best_std = None
    return RhoReport(rho=float(np.clip(best, 0.0, 1.0)), method=method,
                     samples=samples, std_err=best_std, eval_points=points)


def rho_bound_glm(bounds, d: int) -> float:
    """Guaranteed rho lower bound ell/(u d) for the svd sketch on a GLM."""
    if bounds.u == 0:
        raise ValueError("curvature upper bound is zero")
    return bounds.ell / (bounds.u * d)


def gd_rate_bound(problem, bounds) -> float:
    """Upper bound 1 - (ell/u) / kappa(A)^2 on the gradient-descent rate."""
    kappa = matcore.condition_number(problem.data_matrix())
    return 1.0 - (bounds.ell / bounds.u) / kappa**2


def lyapunov_phi(b: np.ndarray, x: np.ndarray, x_star: np.ndarray,
                 h_star: np.ndarray, rho: float) -> float:
    """Potential (3/rho) ||B - H*^{-1}||_{F(H*)}^2 + ||x - x*||_{H*}."""
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    h_inv = matcore.spd_solve(h_star, np.eye(h_star.shape[0]))
    b_err = matcore.weighted_fro_norm(b - h_inv, h_star)
    return (3.0 / rho) * b_err**2 + matcore.local_norm(x - x_star, h_star)


def lyapunov_beta(mu: float, l1: float, l2: float, rho: float) -> float:
    if min(mu, l1, l2, rho) <= 0:
        raise ValueError("all constants must be positive")
    return 4.0 * np.sqrt(2.0) * l1**2.5 / (mu * l2 * rho)


def lyapunov_psi(b: np.ndarray, f_gap: float, h_star: np.ndarray,
                 mu: float, l1: float, l2: float, rho: float) -> float:
    """Potential sqrt(f gap) + beta ||B - H*^{-1}||_{F(H*)}^2."""
    if f_gap < 0:
        raise ValueError(f"f_gap must be >= 0, got {f_gap}")
    beta = lyapunov_beta(mu, l1, l2, rho)
    h_inv = matcore.spd_solve(h_star, np.eye(h_star.shape[0]))
    b_err = matcore.weighted_fro_norm(b - h_inv, h_star)
    return np.sqrt(f_gap) + beta * b_err**2


def lyapunov_sample(b, x, f_gap, reference, rho,
                    mu=None, l1=None, l2=None) -> LyapunovSample:
    """Evaluate both potentials at one iterate against a validated reference.

    psi is filled only when the (mu, L1, L2) constants are all supplied.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    h_inv = matcore.spd_solve(reference.h_star, np.eye(reference.h_star.shape[0]))
    b_err_sq = matcore.weighted_fro_norm(b - h_inv, reference.h_star) ** 2
    x_err = matcore.local_norm(x - reference.x_star, reference.h_star)
    phi = (3.0 / rho) * b_err_sq + x_err
    gap_sqrt = np.sqrt(max(f_gap, 0.0))
    psi = None
    if mu is not None and l1 is not None and l2 is not None:
        psi = gap_sqrt + lyapunov_beta(mu, l1, l2, rho) * b_err_sq
    return LyapunovSample(phi=phi, psi=psi, components=(b_err_sq, x_err, gap_sqrt))


def region_radius_thm1(rho: float, d: int) -> float:
    """Initial-potential radius guaranteeing the 1 - rho/2 contraction.

    0.5 * min{3/2 - sqrt(1 + 8 sqrt((1-rho)/(1-2rho/3)))/2,
              rho(2-rho)/(69d + 5rho)}.
    """
    if not 0 < rho <= 1:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    first = 1.5 - 0.5 * np.sqrt(1.0 + 8.0 * np.sqrt((1.0 - rho) / (1.0 - 2.0 * rho / 3.0)))
    second = rho * (2.0 - rho) / (69.0 * d + 5.0 * rho)
    return 0.5 * min(first, second)


def region_radius_thm2(mu: float, l1: float, l2: float, d: int, rho: float) -> float:
    """Initial-gap radius 0.25 [sqrt(2 L1) L2/mu^2 + 32 sqrt(2) d L1^{5/2} L2/(rho mu^4)]^{-2}."""
    if min(mu, l1, l2, rho) <= 0:
        raise ValueError("all constants must be positive")
    inner = np.sqrt(2.0 * l1) * l2 / mu**2 \
        + 32.0 * np.sqrt(2.0) * d * l1**2.5 * l2 / (rho * mu**4)
    return 0.25 / inner**2


def self_concordance_check(problem, x: np.ndarray, y: np.ndarray, probe_dirs) -> float:
    """Largest violation of the local-norm change inequality between x and y.

    For each direction v, the ratio ||v||_y / ||v||_x must lie in
    [1 - r, 1/(1 - r)] where r = ||y - x||_x < 1. Returns the worst
    violation over the probe directions (0 when all hold).
    """
    x = matcore.as_vector(x)
    y = matcore.as_vector(y)
    hx = problem.full_hessian(x)
    hy = problem.full_hessian(y)
    r = matcore.local_norm(y - x, hx)
    if r >= 1:
        raise ValueError(f"||y - x||_x = {r:.4f} >= 1: points are not close enough")
    lower, upper = 1.0 - r, 1.0 / (1.0 - r)
    worst = 0.0
    for v in probe_dirs:
        v = matcore.as_vector(v)
        nx = matcore.local_norm(v, hx)
        if nx == 0:
            continue
        ratio = matcore.local_norm(v, hy) / nx
        worst = max(worst, lower - ratio, ratio - upper, 0.0)
    return worst


def superlinear_ratios(trace, floor: float = GAP_RATIO_FLOOR) -> list[float]:
    """Square-root ratios of successive f-gaps, truncated at the noise floor."""
    gaps = trace.column("f_gap") if hasattr(trace, "column") else np.asarray(trace, dtype=float)
    kept = []
    for g in gaps:
        if not np.isfinite(g) or g < floor:
            break
        kept.append(g)
    return [float(np.sqrt(kept[i + 1] / kept[i])) for i in range(len(kept) - 1)]


def ratio_slope(ratios) -> float:
    """Least-squares slope of a ratio sequence against the iteration index."""
    r = np.asarray(ratios, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two ratios to fit a slope")
    return float(np.polyfit(np.arange(r.size), r, 1)[0])


def glm_constants(problem, bounds):
    """(mu, L1): strong-convexity and gradient-Lipschitz constants of a GLM.

    mu = reg + ell sigma_min(A)^2 / n and L1 = reg + u sigma_max(A)^2 / n,
    from the curvature range and the data matrix spectrum.
    """
    svals = np.linalg.svd(problem.a, compute_uv=False)
    svals = svals[svals > 0]
    mu = problem.reg + bounds.ell * float(svals[-1]) ** 2 / problem.n
    l1 = problem.reg + bounds.u * float(svals[0]) ** 2 / problem.n
    return mu, l1


def estimate_hessian_lipschitz(problem, x0: np.ndarray, pairs: int = 50,
                               radius: float = 1e-3,
                               rng: np.random.Generator | None = None) -> float:
    """Sampled estimate of the Hessian Lipschitz constant near x0.

    Maximum of ||H(y) - H(x)||_2 / ||y - x||_2 over random nearby pairs;
    an estimate, not a certified bound.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    x0 = matcore.as_vector(x0)
    best = 0.0
    for _ in range(pairs):
        u = rng.standard_normal(x0.size)
        u *= radius / np.linalg.norm(u)
        x = x0 + u
        v = rng.standard_normal(x0.size)
        v *= radius / np.linalg.norm(v)
        y = x + v
        try:
            hx = problem.full_hessian(x)
            hy = problem.full_hessian(y)
        except Exception:
            continue
        diff = np.linalg.norm(hy - hx, ord=2)
        best = max(best, diff / np.linalg.norm(y - x))
    return best
