"""Convergence figures from solver trace CSVs."""

from .figures import CurveInfo, FigureError, FigureSpec, RenderResult, render, render_grid
from .traces import TraceData, TraceFormatError, read_trace

__all__ = [
    "CurveInfo",
    "FigureError",
    "FigureSpec",
    "RenderResult",
    "TraceData",
    "TraceFormatError",
    "read_trace",
    "render",
    "render_grid",
]

__version__ = "0.1.0"
