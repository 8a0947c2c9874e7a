"""Solver loops, step rules and the reference solve.

The randomized quasi-Newton run draws a fresh sketching matrix every
iteration and updates its inverse-Hessian estimate from the Hessian sketch
alone. Baselines (classic BFGS, gradient descent, Nesterov, Newton) share
the same tracing and step-rule machinery so their traces are directly
comparable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import matcore, problems, qn_update, sketch
from .errors import (
    DomainError,
    LineSearchFailure,
    NotPositiveDefiniteError,
    ReferenceFailure,
    RejectedSketch,
)

SOLVERS = ("rbfgs", "bfgs", "gd", "nesterov", "newton")
STEP_RULES = ("unit_monotonic", "unit_plain", "wolfe")
B0_CHOICES = ("identity", "scaled_identity", "true_inverse_at_x0")
HESSIAN_POINTS = ("pre_step", "post_step")

MAX_SKETCH_REDRAWS = 20
MAX_FEASIBILITY_HALVINGS = 60

# test mode: re-evaluate the accepted conditions inside wolfe_search before
# every return (full strong Wolfe, or sufficient decrease on the fallback)
VERIFY_WOLFE = False


@dataclass
class RunConfig:
    """Complete description of one solver run."""

    problem: object
    solver: str = "rbfgs"
    sketch: sketch.SketchSpec | None = None
    step_rule: str = "wolfe"
    b0: object = "identity"           # named choice or explicit (d, d) array
    x0: object = "zeros"              # named choice or explicit (d,) array
    max_iters: int = 200
    grad_tol: float = 1e-9
    gap_floor: float = 1e-14
    seed: int = 0
    trace_every: int = 1
    hessian_point: str = "pre_step"
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    name: str = "run"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.hessian_point not in HESSIAN_POINTS:
            raise ValueError(f"unknown hessian point {self.hessian_point!r}")
        if isinstance(self.b0, str) and self.b0 not in B0_CHOICES:
            raise ValueError(f"unknown b0 choice {self.b0!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol <= 0 or self.gap_floor <= 0:
            raise ValueError("tolerances must be positive")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        if self.solver == "rbfgs" and self.sketch is None:
            raise ValueError("rbfgs requires a sketch spec")


@dataclass
class IterRecord:
    iter: int
    time_s: float
    f_gap: float
    grad_norm: float
    step_len: float
    b_err: float | None
    redraws: int


@dataclass
class Trace:
    metadata: dict
    records: list[IterRecord]
    termination: str

    def column(self, name: str) -> np.ndarray:
        vals = [getattr(r, name) for r in self.records]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)


@dataclass(frozen=True)
class Reference:
    """Validated minimizer data: the anchor for f-gaps and B-error norms."""

    x_star: np.ndarray
    f_star: float
    h_star: np.ndarray


def wolfe_search(problem, x: np.ndarray, direction: np.ndarray,
                 c1: float = 1e-4, c2: float = 0.9,
                 t_init: float = 1.0, max_evals: int = 50) -> float:
    """Step length satisfying the strong Wolfe conditions.

    Bracketing phase doubles the trial step until the minimum is bracketed,
    then a bisection zoom narrows in. Points outside the objective's domain
    evaluate to +inf, which steers the search back inside. If the evaluation
    budget runs out, the best sufficient-decrease step seen is returned;
    LineSearchFailure is raised only when halving from t_init 50 times never
    produced sufficient decrease.
    """
    d = np.asarray(direction, dtype=float)
    f0 = problem.value(x)
    dphi0 = float(problem.gradient(x) @ d)
    if dphi0 >= 0:
        raise ValueError(f"not a descent direction: g'd = {dphi0:.3e}")

    evals = 0

    def phi(t):
        nonlocal evals
        evals += 1
        try:
            return problem.value(x + t * d)
        except DomainError:
            return np.inf

    def dphi(t):
        nonlocal evals
        evals += 1
        return float(problem.gradient(x + t * d) @ d)

    def armijo(t, ft):
        return ft <= f0 + c1 * t * dphi0

    def accept(t, full_conditions):
        if VERIFY_WOLFE:
            ft = problem.value(x + t * d)
            assert ft <= f0 + c1 * t * dphi0 + 1e-12 * max(abs(f0), 1.0)
            if full_conditions:
                gt = float(problem.gradient(x + t * d) @ d)
                assert abs(gt) <= c2 * abs(dphi0) + 1e-12 * abs(dphi0)
        return t

    best_t, best_f = None, np.inf

    def note(t, ft):
        nonlocal best_t, best_f
        if armijo(t, ft) and ft < best_f:
            best_t, best_f = t, ft

    def zoom(lo, f_lo, hi, f_hi):
        while evals < max_evals:
            t = 0.5 * (lo + hi)
            ft = phi(t)
            note(t, ft)
            if not armijo(t, ft) or ft >= f_lo:
                hi, f_hi = t, ft
            else:
                gt = dphi(t)
                if abs(gt) <= c2 * abs(dphi0):
                    return t
                if gt * (hi - lo) >= 0:
                    hi, f_hi = lo, f_lo
                lo, f_lo = t, ft
        return None

    t_prev, f_prev = 0.0, f0
    t = t_init
    result = None
    first = True
    while evals < max_evals:
        ft = phi(t)
        note(t, ft)
        if not armijo(t, ft) or (not first and ft >= f_prev):
            result = zoom(t_prev, f_prev, t, ft)
            break
        gt = dphi(t)
        if abs(gt) <= c2 * abs(dphi0):
            return accept(t, full_conditions=True)
        if gt >= 0:
            result = zoom(t, ft, t_prev, f_prev)
            break
        t_prev, f_prev = t, ft
        t = 2.0 * t
        first = False

    if result is not None:
        return accept(result, full_conditions=True)
    if best_t is not None:
        return accept(best_t, full_conditions=False)
    # last resort: plain halving from t_init
    t = t_init
    for _ in range(50):
        t *= 0.5
        ft = phi(t)
        if armijo(t, ft):
            return accept(t, full_conditions=False)
    raise LineSearchFailure(
        f"no sufficient-decrease step found after 50 halvings from {t_init}"
    )


def check_strong_wolfe(problem, x, direction, t, c1=1e-4, c2=0.9) -> bool:
    """Post-hoc verification that a returned step satisfies both conditions."""
    f0 = problem.value(x)
    dphi0 = float(problem.gradient(x) @ direction)
    ft = problem.value(x + t * direction)
    gt = float(problem.gradient(x + t * direction) @ direction)
    return ft <= f0 + c1 * t * dphi0 + 1e-12 * abs(f0) and abs(gt) <= c2 * abs(dphi0) + 1e-12


def _feasible_unit_step(problem, x, p, t_init=1.0):
    """Largest t in {t_init, t_init/2, ...} keeping x + t p inside the domain."""
    t = t_init
    for _ in range(MAX_FEASIBILITY_HALVINGS):
        try:
            problem.value(x + t * p)
            return t
        except DomainError:
            t *= 0.5
    raise LineSearchFailure("could not regain the domain by step halving")


def _resolve_x0(config, rng) -> np.ndarray:
    d = config.problem.dim
    x0 = config.x0
    if isinstance(x0, str):
        if x0 == "zeros":
            x0 = np.zeros(d)
        elif x0 == "ones":
            x0 = np.ones(d)
        elif x0 == "gauss":
            x0 = rng.standard_normal(d)
        else:
            raise ValueError(f"unknown x0 choice {x0!r}")
    x0 = matcore.as_vector(x0)
    if x0.size != d:
        raise ValueError(f"x0 has dimension {x0.size}, problem has {d}")
    config.problem.value(x0)  # raises DomainError if infeasible
    return x0


def _resolve_b0(config, x0) -> np.ndarray:
    d = config.problem.dim
    b0 = config.b0
    if isinstance(b0, str):
        if b0 == "identity":
            return np.eye(d)
        if b0 == "scaled_identity":
            top = problems.hessian_top_eigenvalue(config.problem, x0)
            return np.eye(d) / max(top, 1e-300)
        if b0 == "true_inverse_at_x0":
            h0 = config.problem.full_hessian(x0)
            return matcore.symmetrize(matcore.spd_solve(h0, np.eye(d)))
        raise ValueError(f"unknown b0 choice {b0!r}")
    b0 = matcore.assert_symmetric(np.asarray(b0, dtype=float))
    if b0.shape != (d, d):
        raise ValueError(f"b0 has shape {b0.shape}, expected {(d, d)}")
    return b0


class _Tracer:
    """Accumulates per-iteration records; excludes setup from wall time."""

    def __init__(self, config: RunConfig, reference: Reference | None):
        self.config = config
        self.reference = reference
        self.records: list[IterRecord] = []
        self.descent_fallbacks = 0
        self._sqrt_h = None
        self._h_inv = None
        if reference is not None:
            try:
                self._sqrt_h = matcore.spd_sqrt(reference.h_star)
                self._h_inv = matcore.spd_solve(reference.h_star, np.eye(reference.h_star.shape[0]))
            except NotPositiveDefiniteError:
                pass  # reference Hessian numerically singular: no B-error column
        self._t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0

    def f_gap(self, f: float) -> float:
        if self.reference is None:
            return np.nan
        return f - self.reference.f_star

    def b_err(self, b: np.ndarray | None) -> float | None:
        if b is None or self._sqrt_h is None:
            return None
        delta = self._sqrt_h @ (b - self._h_inv) @ self._sqrt_h
        return float(np.linalg.norm(delta))

    def should_record(self, k: int, terminal: bool) -> bool:
        return terminal or k % self.config.trace_every == 0

    def record(self, k, f, grad_norm, step_len, b, redraws, terminal=False):
        if not self.should_record(k, terminal):
            return
        self.records.append(IterRecord(
            iter=k,
            time_s=self.elapsed(),
            f_gap=self.f_gap(f),
            grad_norm=grad_norm,
            step_len=step_len,
            b_err=self.b_err(b),
            redraws=redraws,
        ))

    def finish(self, termination: str) -> Trace:
        metadata = dict(self.config.metadata)
        if self.descent_fallbacks:
            metadata["descent_fallbacks"] = str(self.descent_fallbacks)
        return Trace(metadata=metadata, records=self.records,
                     termination=termination)


def _check_termination(config, tracer, f, grad_norm, k):
    if grad_norm <= config.grad_tol:
        return "grad_tol"
    gap = tracer.f_gap(f)
    if not np.isnan(gap) and gap <= config.gap_floor:
        return "gap_floor"
    if k >= config.max_iters:
        return "max_iters"
    return None


def _take_step(config, problem, x, p, f, grad):
    """Apply the configured step rule along p.

    Returns (x_new, step_len, fell_back) where fell_back marks a
    non-descent direction replaced by steepest descent (Wolfe rule only).
    """
    fell_back = False
    if config.step_rule == "wolfe":
        if float(grad @ p) >= 0:
            p = -grad
            fell_back = True
        t = wolfe_search(problem, x, p, c1=config.wolfe_c1, c2=config.wolfe_c2)
        return x + t * p, t, fell_back
    t = _feasible_unit_step(problem, x, p)
    trial = x + t * p
    if config.step_rule == "unit_monotonic" and problem.value(trial) > f:
        return x, 0.0, fell_back
    return trial, t, fell_back


def rbfgs_run(config: RunConfig, reference: Reference | None = None,
              iterate_hook=None) -> Trace:
    """Randomized quasi-Newton run with per-iteration Hessian sketches.

    Each iteration steps along -B grad(f), draws a sketching matrix, and
    refreshes B from the Hessian sketch at the pre-step point (or post-step
    when configured). iterate_hook(k, x, B), when given, observes every
    iterate; it must not mutate its arguments.
    """
    problem = config.problem
    rng = np.random.default_rng(config.seed)
    x = _resolve_x0(config, rng)
    b = _resolve_b0(config, x)
    d = problem.dim
    if iterate_hook is not None:
        iterate_hook(0, x, b)
    tracer = _Tracer(config, reference)
    k = 0
    while True:
        f = problem.value(x)
        grad = problem.gradient(x)
        grad_norm = float(np.linalg.norm(grad))
        reason = _check_termination(config, tracer, f, grad_norm, k)
        if reason is not None:
            tracer.record(k, f, grad_norm, np.nan, b, 0, terminal=True)
            return tracer.finish(reason)

        try:
            x_new, step_len, fell_back = _take_step(config, problem, x,
                                                    -(b @ grad), f, grad)
        except LineSearchFailure:
            tracer.record(k, f, grad_norm, np.nan, b, 0, terminal=True)
            return tracer.finish("line_search_failure")
        tracer.descent_fallbacks += fell_back

        h_point = x if config.hessian_point == "pre_step" else x_new
        redraws = 0
        while True:
            s = sketch.sample(config.sketch, d, rng)
            y = problem.hess_sketch(h_point, s)
            try:
                b = qn_update.bfgs_update(b, s, y)
                break
            except RejectedSketch:
                redraws += 1
                if redraws > MAX_SKETCH_REDRAWS:
                    tracer.record(k, f, grad_norm, step_len, b, redraws, terminal=True)
                    return tracer.finish("sketch_rejected")

        tracer.record(k, f, grad_norm, step_len, b, redraws)
        x = x_new
        k += 1
        if iterate_hook is not None:
            iterate_hook(k, x, b)


def classic_bfgs_run(config: RunConfig, reference: Reference | None = None) -> Trace:
    """Classic BFGS with the step/gradient-difference secant pair."""
    problem = config.problem
    rng = np.random.default_rng(config.seed)
    x = _resolve_x0(config, rng)
    b = _resolve_b0(config, x)
    tracer = _Tracer(config, reference)
    k = 0
    grad = problem.gradient(x)
    while True:
        f = problem.value(x)
        grad_norm = float(np.linalg.norm(grad))
        reason = _check_termination(config, tracer, f, grad_norm, k)
        if reason is not None:
            tracer.record(k, f, grad_norm, np.nan, b, 0, terminal=True)
            return tracer.finish(reason)
        try:
            x_new, step_len, fell_back = _take_step(config, problem, x,
                                                    -(b @ grad), f, grad)
        except LineSearchFailure:
            tracer.record(k, f, grad_norm, np.nan, b, 0, terminal=True)
            return tracer.finish("line_search_failure")
        tracer.descent_fallbacks += fell_back
        grad_new = problem.gradient(x_new)
        b, _ = qn_update.classic_bfgs_update(b, x_new - x, grad_new - grad)
        tracer.record(k, f, grad_norm, step_len, b, 0)
        x, grad = x_new, grad_new
        k += 1


def _first_order_step_len(config, problem, x0):
    """Inverse top curvature, used as the fixed step for unit-rule first-order runs."""
    top = problems.hessian_top_eigenvalue(problem, x0)
    return 1.0 / max(top, 1e-300)


def gd_run(config: RunConfig, reference: Reference | None = None) -> Trace:
    problem = config.problem
    rng = np.random.default_rng(config.seed)
    x = _resolve_x0(config, rng)
    fixed_t = None
    if config.step_rule != "wolfe":
        fixed_t = _first_order_step_len(config, problem, x)
    tracer = _Tracer(config, reference)
    k = 0
    while True:
        f = problem.value(x)
        grad = problem.gradient(x)
        grad_norm = float(np.linalg.norm(grad))
        reason = _check_termination(config, tracer, f, grad_norm, k)
        if reason is not None:
            tracer.record(k, f, grad_norm, np.nan, None, 0, terminal=True)
            return tracer.finish(reason)
        try:
            if config.step_rule == "wolfe":
                t = wolfe_search(problem, x, -grad, c1=config.wolfe_c1, c2=config.wolfe_c2)
                x_new = x - t * grad
            else:
                t = _feasible_unit_step(problem, x, -grad, t_init=fixed_t)
                trial = x - t * grad
                if config.step_rule == "unit_monotonic" and problem.value(trial) > f:
                    x_new, t = x, 0.0
                else:
                    x_new = trial
        except LineSearchFailure:
            tracer.record(k, f, grad_norm, np.nan, None, 0, terminal=True)
            return tracer.finish("line_search_failure")
        tracer.record(k, f, grad_norm, t, None, 0)
        x = x_new
        k += 1


def nesterov_run(config: RunConfig, reference: Reference | None = None) -> Trace:
    """Accelerated gradient iteration with momentum restart on f increase."""
    problem = config.problem
    rng = np.random.default_rng(config.seed)
    x = _resolve_x0(config, rng)
    fixed_t = None
    if config.step_rule != "wolfe":
        fixed_t = _first_order_step_len(config, problem, x)

    def grad_step(point):
        g = problem.gradient(point)
        if config.step_rule == "wolfe":
            t = wolfe_search(problem, point, -g, c1=config.wolfe_c1, c2=config.wolfe_c2)
        else:
            t = _feasible_unit_step(problem, point, -g, t_init=fixed_t)
        return point - t * g, t

    tracer = _Tracer(config, reference)
    x_prev = x.copy()
    age = 0
    k = 0
    while True:
        f = problem.value(x)
        grad_norm = float(np.linalg.norm(problem.gradient(x)))
        reason = _check_termination(config, tracer, f, grad_norm, k)
        if reason is not None:
            tracer.record(k, f, grad_norm, np.nan, None, 0, terminal=True)
            return tracer.finish(reason)
        momentum = age / (age + 3.0)
        y = x + momentum * (x - x_prev)
        for _ in range(MAX_FEASIBILITY_HALVINGS):
            try:
                problem.value(y)
                break
            except DomainError:
                momentum *= 0.5
                y = x + momentum * (x - x_prev)
        try:
            cand, t = grad_step(y)
            if problem.value(cand) > f:
                age = 0  # momentum restart: retry as a plain descent step from x
                cand, t = grad_step(x)
            else:
                age += 1
        except LineSearchFailure:
            tracer.record(k, f, grad_norm, np.nan, None, 0, terminal=True)
            return tracer.finish("line_search_failure")
        tracer.record(k, f, grad_norm, t, None, 0)
        x_prev, x = x, cand
        k += 1


def newton_run(config: RunConfig, reference: Reference | None = None) -> Trace:
    problem = config.problem
    rng = np.random.default_rng(config.seed)
    x = _resolve_x0(config, rng)
    tracer = _Tracer(config, reference)
    k = 0
    while True:
        f = problem.value(x)
        grad = problem.gradient(x)
        grad_norm = float(np.linalg.norm(grad))
        reason = _check_termination(config, tracer, f, grad_norm, k)
        if reason is not None:
            tracer.record(k, f, grad_norm, np.nan, None, 0, terminal=True)
            return tracer.finish(reason)
        p = -matcore.spd_solve(problem.full_hessian(x), grad)
        try:
            x_new, t, fell_back = _take_step(config, problem, x, p, f, grad)
            tracer.descent_fallbacks += fell_back
        except LineSearchFailure:
            tracer.record(k, f, grad_norm, np.nan, None, 0, terminal=True)
            return tracer.finish("line_search_failure")
        tracer.record(k, f, grad_norm, t, None, 0)
        x = x_new
        k += 1


_RUNNERS = {
    "rbfgs": rbfgs_run,
    "bfgs": classic_bfgs_run,
    "gd": gd_run,
    "nesterov": nesterov_run,
    "newton": newton_run,
}


def run(config: RunConfig, reference: Reference | None = None) -> Trace:
    """Dispatch to the configured solver."""
    return _RUNNERS[config.solver](config, reference)


def reference_solve(problem, x0=None, grad_tol: float = 1e-12,
                    max_iters: int = 200) -> Reference:
    """High-accuracy minimizer via damped Newton, for use as a gap anchor.

    Pure quadratics are answered exactly (the origin minimizes 0.5||Ax||^2
    for any A); their Hessians can be numerically singular, which would
    defeat the Newton solve.
    """
    if isinstance(problem, problems.QuadraticProblem):
        h = problem.full_hessian(np.zeros(problem.dim))
        return Reference(np.zeros(problem.dim), 0.0, h)
    x = np.zeros(problem.dim) if x0 is None else matcore.as_vector(x0).copy()
    problem.value(x)  # domain check
    for _ in range(max_iters):
        grad = problem.gradient(x)
        if np.linalg.norm(grad) <= grad_tol:
            return Reference(x, problem.value(x), problem.full_hessian(x))
        h = problem.full_hessian(x)
        p = -matcore.spd_solve(h, grad)
        if float(grad @ p) >= 0:
            p = -grad
        t = wolfe_search(problem, x, p, c1=1e-4, c2=0.9)
        x = x + t * p
    raise ReferenceFailure(
        f"Newton did not reach grad tol {grad_tol} in {max_iters} iterations "
        f"(final grad norm {np.linalg.norm(problem.gradient(x)):.3e})"
    )
