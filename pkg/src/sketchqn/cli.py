"""Command-line entry point.

Subcommands:

    run        execute one configured solver run and write its trace CSV
    compare    run a matrix of solver/sketch cells on a shared problem
    rho        probe the expected-projection rate and its analytic bounds
    reference  compute and store a high-accuracy minimizer
    validate   fast invariant battery (secant identity, fixed points,
               finite differences, self-concordance)

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

import numpy as np
import yaml

from . import data_io, diagnostics, matcore, problems, qn_update, sketch, solvers
from .errors import ConfigError, ReferenceFailure, SketchQnError

DEFAULT_GAP_TARGET = 1e-8


def _apply_overrides(doc: dict, items: dict) -> dict:
    """Apply dotted-key overrides onto a raw config document (copy on write)."""
    doc = dict(doc)
    for key, value in items.items():
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"override {key!r} descends into non-section {part!r}")
            else:
                child = dict(child)
            node[part] = child
            node = child
        node[parts[-1]] = value
    return doc


def _parse_override_pairs(pairs: list[str]) -> dict:
    items = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        items[key] = yaml.safe_load(value)
    return items


def _load_doc_with_overrides(args) -> tuple[dict, str]:
    doc = data_io.load_config_doc(args.config)
    if doc is None:
        raise ConfigError(f"config file {args.config} is empty")
    doc = _apply_overrides(doc, _parse_override_pairs(args.set or []))
    if args.seed is not None:
        doc["seed"] = args.seed
    base_dir = os.path.dirname(os.path.abspath(args.config))
    return doc, base_dir


def _trace_filename(config: solvers.RunConfig) -> str:
    if config.sketch is not None:
        sketch_part, tau = config.sketch.kind, config.sketch.tau
    else:
        sketch_part, tau = "none", 0
    return f"{config.name}_{config.solver}_{sketch_part}_{tau}.csv"


def _reference_or_none(problem, quiet: bool):
    try:
        return solvers.reference_solve(problem)
    except (ReferenceFailure, SketchQnError) as exc:
        if not quiet:
            print(f"warning: reference solve failed ({exc}); f-gaps unavailable",
                  file=sys.stderr)
        return None


def _say(quiet: bool, message: str):
    if not quiet:
        print(message)


def cmd_run(args) -> int:
    doc, base_dir = _load_doc_with_overrides(args)
    config = data_io.resolve_config(doc, base_dir=base_dir)
    reference = _reference_or_none(config.problem, args.quiet)
    trace = solvers.run(config, reference)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, _trace_filename(config))
    data_io.write_trace(trace, path)
    last = trace.records[-1] if trace.records else None
    final_gap = last.f_gap if last else float("nan")
    iters = last.iter if last else 0
    wall = last.time_s if last else 0.0
    _say(args.quiet, f"wrote {path}")
    _say(args.quiet, f"final f_gap={final_gap:.6e} iterations={iters} "
                     f"wall_time={wall:.3f}s termination={trace.termination}")
    return 0


def _compare_cells(doc: dict) -> list[dict]:
    cells = doc.get("compare")
    if not cells or not isinstance(cells, list):
        raise ConfigError("compare requires a 'compare' list of cells in the config")
    out = []
    for cell in cells:
        if not isinstance(cell, dict) or "name" not in cell:
            raise ConfigError(f"each compare cell needs a name: {cell!r}")
        overrides = cell.get("set", {}) or {}
        if any(k.split(".")[0] == "problem" for k in overrides):
            raise ConfigError("compare cells must share the problem; "
                              f"cell {cell['name']!r} overrides problem keys")
        out.append({"name": str(cell["name"]), "set": overrides})
    names = [c["name"] for c in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"compare cell names must be unique: {names}")
    return out


def _iterations_to_target(trace: solvers.Trace, target: float):
    for record in trace.records:
        if np.isfinite(record.f_gap) and record.f_gap <= target:
            return record.iter
    return None


def cmd_compare(args) -> int:
    doc, base_dir = _load_doc_with_overrides(args)
    cells = _compare_cells(doc)
    base_doc = {k: v for k, v in doc.items() if k != "compare"}

    configs = []
    for cell in cells:
        cell_doc = _apply_overrides(base_doc, cell["set"])
        cell_doc["name"] = cell["name"]
        configs.append(data_io.resolve_config(cell_doc, base_dir=base_dir))

    shared = data_io.resolve_config(base_doc, base_dir=base_dir)
    reference = _reference_or_none(shared.problem, args.quiet)
    if reference is None:
        raise ReferenceFailure("compare needs a shared reference minimizer")
    for config in configs:
        config.problem = shared.problem  # one problem instance, one f*

    os.makedirs(args.out, exist_ok=True)

    def run_cell(config):
        trace = solvers.run(config, reference)
        path = os.path.join(args.out, _trace_filename(config))
        data_io.write_trace(trace, path)
        return config, trace, path

    results = []
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_cell, configs))
    else:
        results = [run_cell(c) for c in configs]

    initial_gap = max(trace.records[0].f_gap for _, trace, _ in results
                      if trace.records)
    target = args.target if args.target is not None else DEFAULT_GAP_TARGET * initial_gap

    summary_path = os.path.join(args.out, "summary.csv")
    with open(summary_path, "w", encoding="utf-8") as fh:
        for key in sorted(shared.metadata):
            fh.write(f"# {key}={shared.metadata[key]}\n")
        fh.write(f"# gap_target={target:.17g}\n")
        fh.write("name,solver,sketch,tau,iterations,iters_to_target,final_f_gap,wall_time_s\n")
        for config, trace, _ in results:
            last = trace.records[-1]
            hit = _iterations_to_target(trace, target)
            sketch_part = config.sketch.kind if config.sketch else "none"
            tau = config.sketch.tau if config.sketch else 0
            fh.write(f"{config.name},{config.solver},{sketch_part},{tau},"
                     f"{last.iter},{'' if hit is None else hit},"
                     f"{last.f_gap:.17g},{last.time_s:.17g}\n")

    report_path = os.path.join(args.out, "report.txt")
    with open(report_path, "w", encoding="utf-8") as fh:
        for key in sorted(shared.metadata):
            fh.write(f"# {key}={shared.metadata[key]}\n")
        fh.write(f"gap target: {target:.6e}\n")
        for config, trace, path in results:
            last = trace.records[-1]
            hit = _iterations_to_target(trace, target)
            fh.write(f"{config.name}: iterations={last.iter} "
                     f"to_target={'never' if hit is None else hit} "
                     f"final_gap={last.f_gap:.6e} wall={last.time_s:.3f}s "
                     f"termination={trace.termination} trace={os.path.basename(path)}\n")
    _say(args.quiet, f"wrote {summary_path} and {len(results)} traces to {args.out}")
    return 0


def _probe_iterates(config: solvers.RunConfig, count: int) -> list[np.ndarray]:
    """Iterates of a short run: probe points in the sublevel set of f(x0)."""
    points = []
    collector = lambda k, x, b: points.append(x.copy())
    short = solvers.RunConfig(
        problem=config.problem, solver="rbfgs", sketch=config.sketch,
        step_rule="unit_monotonic" if config.step_rule != "wolfe" else "wolfe",
        b0=config.b0, x0=config.x0, max_iters=max(count - 1, 1),
        grad_tol=1e-300, gap_floor=1e-300, seed=config.seed,
        hessian_point=config.hessian_point, name=config.name)
    solvers.rbfgs_run(short, iterate_hook=collector)
    return points[:count]


def cmd_rho(args) -> int:
    doc, base_dir = _load_doc_with_overrides(args)
    config = data_io.resolve_config(doc, base_dir=base_dir)
    if config.sketch is None:
        raise ConfigError("rho requires a sketch section")
    problem = config.problem
    points = _probe_iterates(config, args.probes)
    rng = np.random.default_rng(config.seed)
    report = diagnostics.rho_at(problem, points, config.sketch,
                                mc_samples=args.mc_samples, rng=rng)
    lines = [
        f"sketch={config.sketch.label()}",
        f"probes={len(points)}",
        f"rho={report.rho:.12g}",
        f"method={report.method}",
        f"samples={report.samples}",
    ]
    if report.std_err is not None:
        lines.append(f"std_err={report.std_err:.6g}")
    if hasattr(problem, "curvature_bounds"):
        bounds = problem.curvature_bounds(points)
        lines.append(f"curvature_ell={bounds.ell:.12g}")
        lines.append(f"curvature_u={bounds.u:.12g}")
        lines.append(f"rho_bound_glm={diagnostics.rho_bound_glm(bounds, problem.dim):.12g}")
        if hasattr(problem, "data_matrix"):
            gd_rate = diagnostics.gd_rate_bound(problem, bounds)
            lines.append(f"gd_rate_bound={gd_rate:.12g}")
            lines.append(f"gd_gap_vs_sketch={report.rho - (1 - gd_rate):.12g}")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{config.name}_rho.txt")
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(config.metadata):
            fh.write(f"# {key}={config.metadata[key]}\n")
        fh.write("\n".join(lines) + "\n")
    _say(args.quiet, "\n".join(lines))
    _say(args.quiet, f"wrote {path}")
    return 0


def cmd_reference(args) -> int:
    doc, base_dir = _load_doc_with_overrides(args)
    config = data_io.resolve_config(doc, base_dir=base_dir)
    reference = solvers.reference_solve(config.problem)
    grad_norm = np.linalg.norm(config.problem.gradient(reference.x_star))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{config.name}_reference.txt")
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(config.metadata):
            fh.write(f"# {key}={config.metadata[key]}\n")
        fh.write(f"f_star={reference.f_star:.17g}\n")
        fh.write(f"grad_norm={grad_norm:.6e}\n")
        fh.write("x_star=" + ",".join(f"{v:.17g}" for v in reference.x_star) + "\n")
    _say(args.quiet, f"f_star={reference.f_star:.12g} grad_norm={grad_norm:.3e}")
    _say(args.quiet, f"wrote {path}")
    return 0


# --- validate: fast invariant battery ----------------------------------------

def _check_secant_identity() -> str | None:
    rng = np.random.default_rng(0)
    for _ in range(60):
        d, tau = 12, int(rng.integers(1, 6))
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        h = (q * rng.uniform(0.5, 2.0, size=d)) @ q.T
        b = matcore.symmetrize(rng.standard_normal((d, d)))
        s = rng.standard_normal((d, tau))
        y = h @ s
        out = qn_update.bfgs_update(b, s, y)
        if np.linalg.norm(out @ y - s) > 1e-9 * np.linalg.norm(s):
            return "sketched secant identity violated"
    return None


def _check_fixed_points() -> str | None:
    rng = np.random.default_rng(1)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    h = (q * rng.uniform(0.5, 2.0, size=8)) @ q.T
    h_inv = np.linalg.inv(h)
    s = rng.standard_normal((8, 3))
    if np.linalg.norm(qn_update.bfgs_update(h_inv, s, h @ s) - h_inv) > 1e-9:
        return "inverse Hessian is not a fixed point"
    b = matcore.symmetrize(rng.standard_normal((8, 8)))
    full = qn_update.bfgs_update(b, np.eye(8), h)
    if np.linalg.norm(full - h_inv) > 1e-8 * np.linalg.norm(h_inv):
        return "invertible sketch did not produce the exact inverse"
    return None


def _check_finite_differences() -> str | None:
    rng = np.random.default_rng(2)
    instances = [
        problems.QuadraticProblem(rng.standard_normal((6, 4))),
        problems.make_synthetic_logistic(4, 30, seed=3, reg=1e-2),
        problems.make_random_polytope_barrier(4, 10, seed=4),
    ]
    for problem in instances:
        for _ in range(5):
            x = 0.05 * rng.standard_normal(problem.dim)
            g = problem.gradient(x)
            fd = np.zeros_like(x)
            for i in range(x.size):
                e = np.zeros_like(x)
                e[i] = 1e-6
                fd[i] = (problem.value(x + e) - problem.value(x - e)) / 2e-6
            if np.linalg.norm(g - fd) > 1e-5 * max(np.linalg.norm(g), 1.0):
                return f"gradient mismatch for {type(problem).__name__}"
            h = problem.full_hessian(x)
            s = rng.standard_normal((problem.dim, 2))
            if np.linalg.norm(problem.hess_sketch(x, s) - h @ s) > \
                    1e-9 * max(np.linalg.norm(h), 1.0):
                return f"hessian sketch mismatch for {type(problem).__name__}"
    return None


def _check_self_concordance() -> str | None:
    problem = problems.make_random_polytope_barrier(4, 12, seed=5)
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 20:
        x = 0.2 * rng.standard_normal(4)
        if not problem.in_domain(x):
            continue
        step = rng.standard_normal(4)
        r = matcore.local_norm(step, problem.full_hessian(x))
        y = x + step * (0.6 / r)
        if not problem.in_domain(y):
            continue
        dirs = rng.standard_normal((3, 4))
        if diagnostics.self_concordance_check(problem, x, y, dirs) > 1e-9:
            return "self-concordance inequality violated"
        checked += 1
    return None


_VALIDATION_GROUPS = (
    ("secant_identity", _check_secant_identity),
    ("fixed_points", _check_fixed_points),
    ("finite_differences", _check_finite_differences),
    ("self_concordance", _check_self_concordance),
)


def cmd_validate(args) -> int:
    failures = 0
    for name, check in _VALIDATION_GROUPS:
        detail = check()
        if detail is None:
            _say(args.quiet, f"PASS {name}")
        else:
            failures += 1
            print(f"FAIL {name}: {detail}", file=sys.stderr)
    return 0 if failures == 0 else 1


def _add_common(parser, config_required=True):
    if config_required:
        parser.add_argument("--config", required=True, help="YAML run configuration")
        parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override a config key (dotted path, repeatable)")
        parser.add_argument("--seed", type=int, default=None, help="override the seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchqn",
        description="Randomized quasi-Newton experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run a solver/sketch comparison matrix")
    _add_common(p_cmp)
    p_cmp.add_argument("--jobs", type=int, default=1, help="parallel cells")
    p_cmp.add_argument("--target", type=float, default=None,
                       help="absolute f-gap target (default 1e-8 x initial gap)")
    p_cmp.set_defaults(func=cmd_compare)

    p_rho = sub.add_parser("rho", help="expected-projection rate report")
    _add_common(p_rho)
    p_rho.add_argument("--probes", type=int, default=5, help="probe iterate count")
    p_rho.add_argument("--mc-samples", type=int, default=10_000,
                       help="Monte Carlo draws for non-enumerable sketches")
    p_rho.set_defaults(func=cmd_rho)

    p_ref = sub.add_parser("reference", help="high-accuracy reference solve")
    _add_common(p_ref)
    p_ref.set_defaults(func=cmd_reference)

    p_val = sub.add_parser("validate", help="fast invariant battery")
    _add_common(p_val, config_required=False)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except yaml.YAMLError as exc:
        print(f"config error: invalid YAML ({exc})", file=sys.stderr)
        return 2
    except (SketchQnError, np.linalg.LinAlgError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
