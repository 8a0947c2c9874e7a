"""Reader for solver trace CSVs.

The schema is the external contract of the solver harness: ``#``-prefixed
``key=value`` metadata lines, a fixed header row
``iter,time_s,f_gap,grad_norm,step_len,b_err,redraws`` and one data row per
recorded iteration. Empty float fields decode to NaN. This module parses the
format directly; it has no dependency on the package that writes it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COLUMNS = ("iter", "time_s", "f_gap", "grad_norm", "step_len", "b_err", "redraws")


class TraceFormatError(ValueError):
    """The file does not follow the trace CSV schema."""


@dataclass
class TraceData:
    path: str
    metadata: dict
    columns: dict  # column name -> float ndarray

    @property
    def rows(self) -> int:
        return self.columns["iter"].size

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise TraceFormatError(f"{self.path}: no column named {name!r}; "
                                   f"schema columns are {COLUMNS}")
        return self.columns[name]

    def default_label(self) -> str:
        """Legend label from metadata: distribution_tau when present."""
        kind = self.metadata.get("sketch.kind")
        tau = self.metadata.get("sketch.tau")
        if kind and tau:
            return f"{kind}_{tau}"
        return self.metadata.get("solver.method") or self.metadata.get("name", self.path)


def _parse_float(token: str) -> float:
    return float(token) if token else np.nan


def read_trace(path: str) -> TraceData:
    metadata = {}
    header = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                metadata[key] = value
                continue
            parts = line.split(",")
            if header is None:
                header = tuple(parts)
                if header != COLUMNS:
                    raise TraceFormatError(
                        f"{path}: unexpected columns {header}, want {COLUMNS}")
                continue
            if len(parts) != len(COLUMNS):
                raise TraceFormatError(f"{path}: row has {len(parts)} fields: {line!r}")
            rows.append(parts)
    if header is None:
        raise TraceFormatError(f"{path}: missing header row")
    columns = {
        name: np.array([_parse_float(r[i]) for r in rows], dtype=float)
        for i, name in enumerate(COLUMNS)
    }
    return TraceData(path=path, metadata=metadata, columns=columns)
