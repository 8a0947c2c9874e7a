"""Figure construction from trace files.

A FigureSpec selects traces, an x axis (iteration or wall time), a y column
and scale, and an output file. Styling is deterministic: each curve's color
is keyed by a stable hash of its legend label, so re-renders and grids reuse
identical colors for identical labels.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .traces import TraceData, read_trace  # noqa: E402

X_AXES = ("iteration", "time_s")
Y_COLUMNS = ("f_gap", "grad_norm", "b_err")
FORMATS = ("png", "svg")

# double-precision noise floor: gap values below this are flattened so the
# log axis stays finite and every trace row keeps its plotted point
GAP_CLIP = 1e-15

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")

# deterministic svg object ids, for byte-stable vector output
plt.rcParams["svg.hashsalt"] = "plotgen"


class FigureError(ValueError):
    """The figure spec cannot be rendered."""


@dataclass
class CurveInfo:
    label: str
    points: int


@dataclass
class RenderResult:
    path: str
    curves: list


@dataclass
class FigureSpec:
    inputs: list              # list of {"path": str, "label": optional str}
    x_axis: str = "iteration"
    y_column: str = "f_gap"
    log_y: bool = True
    output: str = "figure.png"
    title: str = ""

    def __post_init__(self):
        if not self.inputs:
            raise FigureError("figure spec needs at least one input trace")
        norm = []
        for entry in self.inputs:
            if isinstance(entry, str):
                entry = {"path": entry}
            if "path" not in entry:
                raise FigureError(f"input entry has no path: {entry!r}")
            norm.append({"path": entry["path"], "label": entry.get("label")})
        self.inputs = norm
        if self.x_axis not in X_AXES:
            raise FigureError(f"unknown x axis {self.x_axis!r}; expected one of {X_AXES}")
        if self.y_column not in Y_COLUMNS:
            raise FigureError(f"unknown y column {self.y_column!r}; "
                              f"expected one of {Y_COLUMNS}")
        ext = os.path.splitext(self.output)[1].lstrip(".").lower()
        if ext not in FORMATS:
            raise FigureError(f"output {self.output!r} must end in one of {FORMATS}")


def color_for(label: str) -> str:
    digest = hashlib.md5(label.encode("utf-8")).digest()
    return _PALETTE[digest[0] % len(_PALETTE)]


def _curve_values(trace: TraceData, spec: FigureSpec):
    x = trace.column("iter") if spec.x_axis == "iteration" else trace.column("time_s")
    y = trace.column(spec.y_column).copy()
    if y[~np.isnan(y)].size == 0:
        raise FigureError(f"{trace.path}: column {spec.y_column!r} has no values")
    if spec.y_column == "f_gap":
        y[y < GAP_CLIP] = GAP_CLIP
    return x, y


def _draw_panel(ax, spec: FigureSpec) -> list:
    curves = []
    for entry in spec.inputs:
        trace = read_trace(entry["path"])
        if trace.rows == 0:
            raise FigureError(f"{trace.path}: trace has no data rows")
        label = entry["label"] or trace.default_label()
        x, y = _curve_values(trace, spec)
        ax.plot(x, y, label=label, color=color_for(label), linewidth=1.6)
        curves.append(CurveInfo(label=label, points=int(len(y))))
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration" if spec.x_axis == "iteration" else "time, s")
    ax.set_ylabel(spec.y_column)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return curves


def _save(fig, output: str):
    out_dir = os.path.dirname(output)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if output.endswith(".svg"):
        # omit the creation date so identical inputs give identical bytes
        fig.savefig(output, metadata={"Date": None})
    else:
        fig.savefig(output, dpi=150)
    plt.close(fig)


def render(spec: FigureSpec) -> RenderResult:
    """Render one panel; returns the output path and per-curve point counts."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    curves = _draw_panel(ax, spec)
    fig.tight_layout()
    _save(fig, spec.output)
    return RenderResult(path=spec.output, curves=curves)


def render_grid(specs: list, output: str, rows: int = 0, cols: int = 0,
                shared_y: bool = False) -> RenderResult:
    """Compose panels into a grid figure (row-major placement)."""
    if not specs:
        raise FigureError("grid needs at least one panel spec")
    n = len(specs)
    if rows < 1 or cols < 1:
        cols = cols if cols >= 1 else (2 if n > 1 else 1)
        rows = rows if rows >= 1 else (n + cols - 1) // cols
    if rows * cols < n:
        raise FigureError(f"grid {rows}x{cols} cannot hold {n} panels")
    fig, axes = plt.subplots(rows, cols, figsize=(5.0 * cols, 3.8 * rows),
                             sharey=shared_y, squeeze=False)
    curves = []
    for i, spec in enumerate(specs):
        ax = axes[i // cols][i % cols]
        curves.extend(_draw_panel(ax, spec))
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.tight_layout()
    _save(fig, output)
    return RenderResult(path=output, curves=curves)
