"""Randomized quasi-Newton optimization with sketched Hessian updates."""

from . import data_io, diagnostics, matcore, problems, qn_update, sketch, solvers
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    LibsvmFormatError,
    LineSearchFailure,
    NotPositiveDefiniteError,
    NotSymmetricError,
    ReferenceFailure,
    RejectedSketch,
    SketchQnError,
    TraceSchemaError,
)
from .problems import CurvatureBounds, GlmProblem, LogBarrierProblem, QuadraticProblem
from .sketch import SketchSpec
from .solvers import Reference, RunConfig, Trace, reference_solve, run

__all__ = [
    "ConfigError",
    "CurvatureBounds",
    "DimensionError",
    "DomainError",
    "GlmProblem",
    "LibsvmFormatError",
    "LineSearchFailure",
    "LogBarrierProblem",
    "NotPositiveDefiniteError",
    "NotSymmetricError",
    "QuadraticProblem",
    "Reference",
    "ReferenceFailure",
    "RejectedSketch",
    "RunConfig",
    "SketchQnError",
    "SketchSpec",
    "Trace",
    "TraceSchemaError",
    "data_io",
    "diagnostics",
    "matcore",
    "problems",
    "qn_update",
    "reference_solve",
    "run",
    "sketch",
    "solvers",
]

__version__ = "0.1.0"
