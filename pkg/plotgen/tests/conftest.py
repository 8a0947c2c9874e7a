import pytest

HEADER = "iter,time_s,f_gap,grad_norm,step_len,b_err,redraws"


def format_trace(rows, metadata=None):
    lines = [f"# {k}={v}" for k, v in sorted((metadata or {}).items())]
    lines.append(HEADER)
    for r in rows:
        lines.append(",".join(str(v) if v is not None else "" for v in r))
    return "\n".join(lines) + "\n"


def geometric_rows(n, ratio=0.5, start=1.0):
    rows = []
    gap = start
    for k in range(n):
        rows.append((k, 0.001 * k, f"{gap:.17g}", f"{gap ** 0.5:.17g}", 1.0, None, 0))
        gap *= ratio
    return rows


@pytest.fixture
def write_trace(tmp_path):
    def _write(name, rows, metadata=None):
        path = tmp_path / name
        path.write_text(format_trace(rows, metadata))
        return str(path)
    return _write
