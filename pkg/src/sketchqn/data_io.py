"""Dataset ingestion, trace serialization and run configuration files.

External formats owned by this module:

- LIBSVM text: one sample per line, ``<label> <idx>:<val> ...`` with
  1-based strictly increasing indices.
- Trace CSV: ``#``-prefixed ``key=value`` metadata lines, then a header row
  ``iter,time_s,f_gap,grad_norm,step_len,b_err,redraws`` and one row per
  recorded iteration. Floats carry 17 significant digits so the round trip
  is bit exact.
- Run configuration: a YAML document with nested ``problem`` / ``sketch`` /
  ``solver`` sections; unknown keys are rejected.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np
import yaml

from . import matcore, problems, sketch, solvers
from .errors import ConfigError, LibsvmFormatError, TraceSchemaError

TRACE_COLUMNS = ("iter", "time_s", "f_gap", "grad_norm", "step_len", "b_err", "redraws")

_LABEL_MAPS = (
    ({-1.0, 1.0}, {-1.0: -1.0, 1.0: 1.0}),
    ({0.0, 1.0}, {0.0: -1.0, 1.0: 1.0}),
    ({1.0, 2.0}, {1.0: -1.0, 2.0: 1.0}),
)


@dataclass
class LibsvmDataset:
    n: int
    d: int
    features: list           # per sample: list of (0-based index, value)
    labels: np.ndarray       # mapped to {-1, +1}
    label_map: dict          # original label -> mapped label

    def to_dense(self) -> np.ndarray:
        """Columns are the samples: a d x n matrix."""
        a = np.zeros((self.d, self.n))
        for j, feats in enumerate(self.features):
            for i, v in feats:
                a[i, j] = v
        return a


def parse_libsvm(source, declared_d: int | None = None) -> LibsvmDataset:
    """Parse LIBSVM text from a path, file object or string.

    Blank lines are skipped; malformed tokens report line and column;
    indices must be >= 1 and strictly increasing within a line.
    """
    if isinstance(source, (str, os.PathLike)) and "\n" not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_libsvm(fh, declared_d)
    if isinstance(source, str):
        source = io.StringIO(source)

    features = []
    raw_labels = []
    max_index = 0
    for lineno, line in enumerate(source, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        tokens = stripped.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmFormatError(f"bad label {tokens[0]!r}", line=lineno, column=1)
        sample = []
        prev_idx = 0
        col = len(tokens[0]) + 2
        for tok in tokens[1:]:
            if ":" not in tok:
                raise LibsvmFormatError(f"expected idx:val, got {tok!r}",
                                        line=lineno, column=col)
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(f"bad token {tok!r}", line=lineno, column=col)
            if idx < 1:
                raise LibsvmFormatError(f"index {idx} must be >= 1",
                                        line=lineno, column=col)
            if idx <= prev_idx:
                raise LibsvmFormatError(
                    f"indices must be strictly increasing, got {idx} after {prev_idx}",
                    line=lineno, column=col)
            prev_idx = idx
            max_index = max(max_index, idx)
            sample.append((idx - 1, val))
            col += len(tok) + 1
        features.append(sample)
        raw_labels.append(label)

    d = max(max_index, declared_d or 0)
    raw = np.array(raw_labels, dtype=float)
    seen = set(raw.tolist())
    for domain, mapping in _LABEL_MAPS:
        if seen <= domain:
            labels = np.array([mapping[v] for v in raw])
            label_map = {k: mapping[k] for k in sorted(seen)}
            break
    else:
        raise LibsvmFormatError(f"unmappable label set {sorted(seen)}")
    return LibsvmDataset(n=len(features), d=d, features=features,
                         labels=labels, label_map=label_map)


def write_libsvm(dataset: LibsvmDataset, sink) -> None:
    """Inverse of parse_libsvm, for round-trip tests and exports."""
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        inverse = {v: k for k, v in dataset.label_map.items()}
        for label, feats in zip(dataset.labels, dataset.features):
            parts = [_fmt(inverse.get(label, label))]
            parts += [f"{i + 1}:{_fmt(v)}" for i, v in feats]
            fh.write(" ".join(parts) + "\n")
    finally:
        if own:
            fh.close()


def _fmt(x: float) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.17g}"


def write_trace(trace, sink) -> None:
    """Serialize a trace as metadata comments + CSV rows."""
    own = isinstance(sink, (str, os.PathLike))
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for key in sorted(trace.metadata):
            fh.write(f"# {key}={trace.metadata[key]}\n")
        fh.write(f"# termination={trace.termination}\n")
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for r in trace.records:
            fields = [str(r.iter), _fmt(r.time_s), _fmt(r.f_gap), _fmt(r.grad_norm),
                      _fmt(r.step_len), _fmt(r.b_err), str(r.redraws)]
            fh.write(",".join(fields) + "\n")
    finally:
        if own:
            fh.close()


def read_trace(source):
    """Parse a trace CSV back into a Trace (losslessly on all float fields)."""
    own = isinstance(source, (str, os.PathLike))
    fh = open(source, "r", encoding="utf-8") if own else source
    try:
        metadata = {}
        termination = "unknown"
        header = None
        records = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                key, _, value = body.partition("=")
                if key == "termination":
                    termination = value
                else:
                    metadata[key] = value
                continue
            if header is None:
                header = tuple(line.split(","))
                if header != TRACE_COLUMNS:
                    raise TraceSchemaError(
                        f"unexpected columns {header}, want {TRACE_COLUMNS}")
                continue
            parts = line.split(",")
            if len(parts) != len(TRACE_COLUMNS):
                raise TraceSchemaError(f"row has {len(parts)} fields: {line!r}")
            records.append(solvers.IterRecord(
                iter=int(parts[0]),
                time_s=float(parts[1]) if parts[1] else np.nan,
                f_gap=float(parts[2]) if parts[2] else np.nan,
                grad_norm=float(parts[3]) if parts[3] else np.nan,
                step_len=float(parts[4]) if parts[4] else np.nan,
                b_err=float(parts[5]) if parts[5] else None,
                redraws=int(parts[6]),
            ))
        if header is None:
            raise TraceSchemaError("no header row found")
        return solvers.Trace(metadata=metadata, records=records, termination=termination)
    finally:
        if own:
            fh.close()


# --- run configuration ------------------------------------------------------

_PROBLEM_KEYS = {
    "kind", "dim", "n", "data", "declared_d", "reg_coef", "normalize",
    "seed", "a", "b", "c", "barrier_weight", "constraints",
}
_SKETCH_KEYS = {"kind", "tau", "svd_tol", "directions", "probabilities"}
_SOLVER_KEYS = {
    "method", "step_rule", "b0", "x0", "max_iters", "grad_tol", "gap_floor",
    "hessian_point", "wolfe_c1", "wolfe_c2",
}
_TOP_KEYS = {"name", "problem", "sketch", "solver", "seed", "trace_every", "compare"}

_SOLVER_DEFAULTS = {
    "method": "rbfgs", "step_rule": "wolfe", "b0": "identity", "x0": "zeros",
    "max_iters": 200, "grad_tol": 1e-9, "gap_floor": 1e-14,
    "hessian_point": "pre_step", "wolfe_c1": 1e-4, "wolfe_c2": 0.9,
}


def _reject_unknown(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _normalize_features(a: np.ndarray) -> np.ndarray:
    """Scale each feature (row) into [-1, 1]; zero rows stay zero."""
    scale = np.abs(a).max(axis=1)
    scale[scale == 0] = 1.0
    return a / scale[:, None]


def _build_problem(section: dict, base_dir: str):
    """Build the objective; returns (problem, resolved section with defaults)."""
    _reject_unknown(section, _PROBLEM_KEYS, "problem")
    kind = section.get("kind")
    if kind == "hilbert":
        dim = int(section.get("dim", 0))
        if dim < 1:
            raise ConfigError("hilbert problem requires dim >= 1")
        return problems.QuadraticProblem(matcore.hilbert(dim)), {"kind": kind, "dim": dim}
    if kind == "logistic":
        reg = section.get("reg_coef", "auto")
        if "data" in section:
            path = section["data"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            if not os.path.exists(path):
                raise ConfigError(f"dataset file not found: {path}")
            ds = parse_libsvm(path, declared_d=section.get("declared_d"))
            a = ds.to_dense()
            normalize = bool(section.get("normalize", False))
            if normalize:
                a = _normalize_features(a)
            base = problems.GlmProblem(a, labels=ds.labels, link="logistic", reg=0.0)
            if reg == "auto":
                reg = 1e-3 * base.smoothness_constant()
            problem = problems.GlmProblem(a, labels=ds.labels, link="logistic",
                                          reg=float(reg))
            return problem, {"kind": kind, "data": section["data"],
                             "reg_coef": problem.reg, "normalize": normalize,
                             "declared_d": ds.d}
        dim = int(section.get("dim", 0))
        n = int(section.get("n", 0))
        if dim < 1 or n < 1:
            raise ConfigError("synthetic logistic requires dim >= 1 and n >= 1")
        seed = int(section.get("seed", 0))
        problem = problems.make_synthetic_logistic(dim, n, seed=seed, reg=reg)
        return problem, {"kind": kind, "dim": dim, "n": n, "seed": seed,
                         "reg_coef": problem.reg}
    if kind == "square_glm":
        dim = int(section.get("dim", 0))
        n = int(section.get("n", 0))
        if dim < 1 or n < 1:
            raise ConfigError("square_glm requires dim >= 1 and n >= 1")
        seed = int(section.get("seed", 0))
        rng = np.random.default_rng(seed)
        reg = section.get("reg_coef", 0.0)
        if reg == "auto":
            reg = 0.0
        problem = problems.GlmProblem(rng.standard_normal((dim, n)), link="square",
                                      reg=float(reg))
        return problem, {"kind": kind, "dim": dim, "n": n, "seed": seed,
                         "reg_coef": problem.reg}
    if kind == "barrier":
        weight = float(section.get("barrier_weight", 1.0))
        if "a" in section:
            a = np.asarray(section["a"], dtype=float)
            b = np.asarray(section["b"], dtype=float)
            c = np.asarray(section["c"], dtype=float)
            problem = problems.LogBarrierProblem(a, b, c, barrier_weight=weight)
            return problem, {"kind": kind, "a": section["a"], "b": section["b"],
                             "c": section["c"], "barrier_weight": weight}
        dim = int(section.get("dim", 0))
        n = int(section.get("constraints", section.get("n", 0)))
        if dim < 1 or n < 1:
            raise ConfigError("random barrier requires dim >= 1 and constraints >= 1")
        seed = int(section.get("seed", 0))
        problem = problems.make_random_polytope_barrier(dim, n, seed=seed,
                                                        barrier_weight=weight)
        return problem, {"kind": kind, "dim": dim, "constraints": n, "seed": seed,
                         "barrier_weight": weight}
    raise ConfigError(f"unknown problem kind {kind!r}")


def _build_sketch(section: dict, problem):
    """Build the sketch spec; returns (spec or None, resolved section)."""
    if not section:
        return None, {}
    _reject_unknown(section, _SKETCH_KEYS, "sketch")
    kind = section.get("kind")
    if kind is None:
        raise ConfigError("sketch section requires a kind")
    tau = int(section.get("tau", 1))
    if tau < 1:
        raise ConfigError(f"sketch tau must be >= 1, got {tau}")
    if tau > problem.dim:
        raise ConfigError(f"sketch tau={tau} exceeds problem dimension {problem.dim}")
    resolved = {"kind": kind, "tau": tau}
    directions = None
    probabilities = None
    if kind in ("svd", "svd_no_sigma"):
        tol = float(section.get("svd_tol", 1e-8))
        resolved["svd_tol"] = tol
        directions = sketch.build_svd_directions(problem.data_matrix(), tol=tol,
                                                 with_sigma=(kind == "svd"))
    elif kind == "fixed_direction":
        if "directions" not in section:
            raise ConfigError("fixed_direction sketch requires explicit directions")
        directions = np.asarray(section["directions"], dtype=float)
        resolved["directions"] = section["directions"]
        if "probabilities" in section:
            probabilities = np.asarray(section["probabilities"], dtype=float)
            resolved["probabilities"] = section["probabilities"]
    try:
        return sketch.SketchSpec(kind=kind, tau=tau, directions=directions,
                                 probabilities=probabilities), resolved
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], out)
    elif isinstance(obj, (list, tuple)):
        out[prefix] = repr(list(obj))
    else:
        out[prefix] = str(obj)


def resolve_config(doc: dict, base_dir: str = ".") -> solvers.RunConfig:
    """Validate a config document and build the run it describes.

    Defaults are filled in and the fully resolved document is recorded in
    RunConfig.metadata so every emitted artifact can embed it.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    _reject_unknown(doc, _TOP_KEYS, "config")
    if "problem" not in doc:
        raise ConfigError("config requires a problem section")
    solver_section = dict(_SOLVER_DEFAULTS)
    user_solver = doc.get("solver", {}) or {}
    _reject_unknown(user_solver, _SOLVER_KEYS, "solver")
    solver_section.update(user_solver)

    problem, problem_resolved = _build_problem(doc["problem"] or {}, base_dir)
    spec, sketch_resolved = _build_sketch(doc.get("sketch", {}) or {}, problem)

    resolved = {
        "name": doc.get("name", "run"),
        "problem": problem_resolved,
        "sketch": sketch_resolved,
        "solver": solver_section,
        "seed": int(doc.get("seed", 0)),
        "trace_every": int(doc.get("trace_every", 1)),
    }
    metadata = {}
    _flatten("", resolved, metadata)

    try:
        return solvers.RunConfig(
            problem=problem,
            solver=solver_section["method"],
            sketch=spec,
            step_rule=solver_section["step_rule"],
            b0=solver_section["b0"],
            x0=solver_section["x0"],
            max_iters=int(solver_section["max_iters"]),
            grad_tol=float(solver_section["grad_tol"]),
            gap_floor=float(solver_section["gap_floor"]),
            seed=int(resolved["seed"]),
            trace_every=int(resolved["trace_every"]),
            hessian_point=solver_section["hessian_point"],
            wolfe_c1=float(solver_section["wolfe_c1"]),
            wolfe_c2=float(solver_section["wolfe_c2"]),
            name=str(resolved["name"]),
            metadata=metadata,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(source) -> solvers.RunConfig:
    """Load and validate a YAML run configuration from a path or file object."""
    if isinstance(source, (str, os.PathLike)) and "\n" not in str(source):
        base_dir = os.path.dirname(os.path.abspath(source))
        with open(source, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    else:
        base_dir = "."
        doc = yaml.safe_load(source)
    return resolve_config(doc, base_dir=base_dir)


def load_config_doc(source) -> dict:
    """Raw YAML document, for callers that need the compare matrix."""
    if isinstance(source, (str, os.PathLike)) and "\n" not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            return yaml.safe_load(fh)
    return yaml.safe_load(source)
