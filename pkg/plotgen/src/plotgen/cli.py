"""plotgen command line: render a figure-spec YAML document.

A single-panel document mirrors FigureSpec:

    inputs:
      - {path: traces/rbfgs.csv, label: svd_10}
      - {path: traces/gd.csv}
    x_axis: iteration        # iteration | time_s
    y_column: f_gap          # f_gap | grad_norm | b_err
    log_y: true
    output: comparison.png
    title: methods compared

A grid document holds a ``panels`` list of single-panel mappings (without
their own output) plus ``output`` and optional ``rows`` / ``cols`` /
``shared_y``. Relative trace paths resolve against the spec file's
directory; relative outputs land in --out.
"""

from __future__ import annotations

import argparse
import os
import sys

import yaml

from .figures import FigureError, FigureSpec, render, render_grid
from .traces import TraceFormatError

_PANEL_KEYS = {"inputs", "x_axis", "y_column", "log_y", "title"}
_GRID_KEYS = {"panels", "output", "rows", "cols", "shared_y"}


def _resolve_inputs(inputs, base_dir):
    resolved = []
    for entry in inputs or []:
        if isinstance(entry, str):
            entry = {"path": entry}
        entry = dict(entry)
        if "path" in entry and not os.path.isabs(entry["path"]):
            entry["path"] = os.path.join(base_dir, entry["path"])
        resolved.append(entry)
    return resolved


def _panel_spec(doc, base_dir, output):
    unknown = set(doc) - _PANEL_KEYS
    if unknown:
        raise FigureError(f"unknown panel key(s): {sorted(unknown)}")
    return FigureSpec(
        inputs=_resolve_inputs(doc.get("inputs"), base_dir),
        x_axis=doc.get("x_axis", "iteration"),
        y_column=doc.get("y_column", "f_gap"),
        log_y=bool(doc.get("log_y", True)),
        output=output,
        title=doc.get("title", ""),
    )


def run_spec_file(path: str, out_dir: str):
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise FigureError(f"{path}: figure spec must be a mapping")
    base_dir = os.path.dirname(os.path.abspath(path))

    def out_path(name):
        if not name:
            raise FigureError("figure spec needs an output file name")
        return name if os.path.isabs(name) else os.path.join(out_dir, name)

    if "panels" in doc:
        unknown = set(doc) - _GRID_KEYS
        if unknown:
            raise FigureError(f"unknown grid key(s): {sorted(unknown)}")
        panels = [_panel_spec(p, base_dir, output="panel.png")
                  for p in doc["panels"]]
        return render_grid(panels, out_path(doc.get("output")),
                           rows=int(doc.get("rows", 0)),
                           cols=int(doc.get("cols", 0)),
                           shared_y=bool(doc.get("shared_y", False)))
    spec = _panel_spec({k: v for k, v in doc.items() if k != "output"},
                       base_dir, output=out_path(doc.get("output")))
    return render(spec)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotgen",
                                     description="Render figures from trace CSVs")
    parser.add_argument("spec", help="figure-spec YAML file")
    parser.add_argument("--out", default=".", help="directory for relative outputs")
    args = parser.parse_args(argv)
    try:
        result = run_spec_file(args.spec, args.out)
    except (FigureError, TraceFormatError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"plotgen error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.path} ({len(result.curves)} curves)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
