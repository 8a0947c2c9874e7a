import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchqn import data_io, solvers
from sketchqn.data_io import (
    LibsvmDataset,
    load_config,
    parse_libsvm,
    read_trace,
    write_libsvm,
    write_trace,
)
from sketchqn.errors import ConfigError, LibsvmFormatError, TraceSchemaError
from sketchqn.problems import GlmProblem, LogBarrierProblem, QuadraticProblem


class TestParseLibsvm:
    def test_basic_line(self):
        ds = parse_libsvm("+1 1:0.5 3:-2\n", declared_d=3)
        assert ds.n == 1 and ds.d == 3
        np.testing.assert_array_equal(ds.to_dense()[:, 0], [0.5, 0.0, -2.0])
        assert ds.labels[0] == 1.0

    def test_zero_one_labels_mapped(self):
        ds = parse_libsvm("0 2:1\n1 1:1\n")
        np.testing.assert_array_equal(ds.labels, [-1.0, 1.0])
        assert ds.label_map == {0.0: -1.0, 1.0: 1.0}

    def test_one_two_labels_mapped(self):
        ds = parse_libsvm("1 1:1\n2 1:2\n")
        np.testing.assert_array_equal(ds.labels, [-1.0, 1.0])

    def test_blank_lines_skipped(self):
        ds = parse_libsvm("1 1:1\n\n  \n-1 2:1\n")
        assert ds.n == 2

    def test_d_is_max_of_declared_and_seen(self):
        assert parse_libsvm("1 2:1\n", declared_d=5).d == 5
        assert parse_libsvm("1 7:1\n", declared_d=5).d == 7

    def test_malformed_token_reports_location(self):
        with pytest.raises(LibsvmFormatError) as err:
            parse_libsvm("1 1:0.5 oops\n-1 1:1\n")
        assert err.value.line == 1

    def test_bad_label(self):
        with pytest.raises(LibsvmFormatError):
            parse_libsvm("spam 1:1\n")

    def test_non_increasing_indices_rejected(self):
        with pytest.raises(LibsvmFormatError):
            parse_libsvm("1 3:1 2:1\n")
        with pytest.raises(LibsvmFormatError):
            parse_libsvm("1 2:1 2:5\n")

    def test_zero_index_rejected(self):
        with pytest.raises(LibsvmFormatError):
            parse_libsvm("1 0:1\n")

    def test_unmappable_labels(self):
        with pytest.raises(LibsvmFormatError):
            parse_libsvm("3 1:1\n7 1:1\n")

    def test_sample_count_matches_nonblank_lines(self):
        text = "1 1:1\n0 2:2\n\n1 3:3\n"
        assert parse_libsvm(text).n == 3

    @settings(max_examples=30, deadline=None)
    @given(st.data())
    def test_round_trip(self, data):
        n = data.draw(st.integers(1, 8))
        d = data.draw(st.integers(1, 10))
        rng_seed = data.draw(st.integers(0, 2**31))
        rng = np.random.default_rng(rng_seed)
        features = []
        for _ in range(n):
            idx = sorted(rng.choice(d, size=rng.integers(0, d + 1), replace=False))
            features.append([(int(i), float(np.round(rng.standard_normal(), 6)))
                             for i in idx])
        labels = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        ds = LibsvmDataset(n=n, d=d, features=features, labels=labels,
                           label_map={-1.0: -1.0, 1.0: 1.0})
        buf = io.StringIO()
        write_libsvm(ds, buf)
        back = parse_libsvm(buf.getvalue(), declared_d=d)
        assert back.n == ds.n and back.d == ds.d
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.to_dense(), ds.to_dense())


def make_trace(records, metadata=None, termination="max_iters"):
    return solvers.Trace(metadata=metadata or {}, records=records,
                         termination=termination)


def random_record(k, rng):
    return solvers.IterRecord(
        iter=k,
        time_s=float(rng.random()),
        f_gap=float(rng.standard_normal() ** 2),
        grad_norm=float(abs(rng.standard_normal())),
        step_len=float(rng.random()) if rng.random() < 0.9 else math.nan,
        b_err=float(abs(rng.standard_normal())) if rng.random() < 0.5 else None,
        redraws=int(rng.integers(0, 3)),
    )


class TestTraceRoundTrip:
    def test_empty_trace(self):
        buf = io.StringIO()
        write_trace(make_trace([], metadata={"name": "empty"}), buf)
        back = read_trace(io.StringIO(buf.getvalue()))
        assert back.records == []
        assert back.metadata["name"] == "empty"
        assert back.termination == "max_iters"

    def test_single_record(self):
        rec = solvers.IterRecord(iter=0, time_s=0.25, f_gap=1.0, grad_norm=0.5,
                                 step_len=1.0, b_err=None, redraws=0)
        buf = io.StringIO()
        write_trace(make_trace([rec]), buf)
        back = read_trace(io.StringIO(buf.getvalue()))
        assert back.records == [rec]

    def test_thousand_records_bit_exact(self):
        rng = np.random.default_rng(0)
        records = [random_record(k, rng) for k in range(1000)]
        buf = io.StringIO()
        write_trace(make_trace(records, metadata={"solver": "rbfgs"}), buf)
        back = read_trace(io.StringIO(buf.getvalue()))
        assert len(back.records) == 1000
        for a, b in zip(records, back.records):
            assert a.iter == b.iter and a.redraws == b.redraws
            for field in ("time_s", "f_gap", "grad_norm", "step_len"):
                x, y = getattr(a, field), getattr(b, field)
                assert (math.isnan(x) and math.isnan(y)) or x == y
            assert a.b_err == b.b_err

    def test_schema_mismatch_rejected(self):
        with pytest.raises(TraceSchemaError):
            read_trace(io.StringIO("a,b,c\n1,2,3\n"))

    def test_missing_header_rejected(self):
        with pytest.raises(TraceSchemaError):
            read_trace(io.StringIO("# name=x\n"))

    def test_metadata_preserved(self):
        trace = make_trace([], metadata={"seed": "3", "solver.method": "gd"},
                           termination="grad_tol")
        buf = io.StringIO()
        write_trace(trace, buf)
        back = read_trace(io.StringIO(buf.getvalue()))
        assert back.metadata == trace.metadata
        assert back.termination == "grad_tol"


MINIMAL_HILBERT = """
name: hilbert_run
problem:
  kind: hilbert
  dim: 12
sketch:
  kind: svd
  tau: 3
solver:
  method: rbfgs
"""


class TestLoadConfig:
    def test_minimal_hilbert(self):
        config = load_config(MINIMAL_HILBERT)
        assert isinstance(config.problem, QuadraticProblem)
        assert config.problem.dim == 12
        assert config.sketch.kind == "svd" and config.sketch.tau == 3
        assert config.solver == "rbfgs"
        assert config.step_rule == "wolfe"  # default filled
        assert config.max_iters == 200
        assert config.metadata["solver.step_rule"] == "wolfe"

    def test_zero_tau_rejected(self):
        with pytest.raises(ConfigError):
            load_config(MINIMAL_HILBERT.replace("tau: 3", "tau: 0"))

    def test_tau_above_dim_rejected(self):
        with pytest.raises(ConfigError):
            load_config(MINIMAL_HILBERT.replace("tau: 3", "tau: 13"))

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError):
            load_config(MINIMAL_HILBERT + "\nbogus: 1\n")

    def test_unknown_solver_key_rejected(self):
        with pytest.raises(ConfigError):
            load_config(MINIMAL_HILBERT + "  momentum: 3\n")

    def test_invalid_enum_rejected(self):
        with pytest.raises(ConfigError):
            load_config(MINIMAL_HILBERT.replace("method: rbfgs", "method: adam"))

    def test_missing_problem_rejected(self):
        with pytest.raises(ConfigError):
            load_config("name: x\n")

    def test_auto_regularization_resolved(self):
        config = load_config(
            "problem:\n  kind: logistic\n  dim: 4\n  n: 30\n  reg_coef: auto\n"
            "sketch:\n  kind: coord\n  tau: 2\n")
        problem = config.problem
        assert isinstance(problem, GlmProblem)
        expected = 1e-3 * GlmProblem(problem.a, labels=problem.labels,
                                     link="logistic").smoothness_constant()
        assert problem.reg == pytest.approx(expected, rel=1e-9)
        assert "problem.reg_coef" in config.metadata

    def test_logistic_from_file(self, tmp_path):
        path = tmp_path / "tiny.libsvm"
        path.write_text("1 1:1 2:0.5\n-1 2:-1\n-1 1:0.2\n")
        config = load_config(
            f"problem:\n  kind: logistic\n  data: {path}\n  reg_coef: 0.01\n"
            "sketch:\n  kind: gauss\n  tau: 1\n")
        assert config.problem.n == 3
        assert config.problem.reg == pytest.approx(0.01)

    def test_missing_data_file_rejected(self):
        with pytest.raises(ConfigError):
            load_config("problem:\n  kind: logistic\n  data: /nonexistent.libsvm\n")

    def test_barrier_explicit(self):
        config = load_config(
            "problem:\n  kind: barrier\n"
            "  a: [[1.0], [-1.0]]\n  b: [1.0, 1.0]\n  c: [0.0]\n"
            "solver:\n  method: newton\n")
        assert isinstance(config.problem, LogBarrierProblem)
        assert config.sketch is None

    def test_metadata_flattening_deterministic(self):
        c1 = load_config(MINIMAL_HILBERT)
        c2 = load_config(MINIMAL_HILBERT)
        assert c1.metadata == c2.metadata

    def test_config_metadata_round_trips_through_trace(self):
        config = load_config(MINIMAL_HILBERT)
        trace = solvers.Trace(metadata=config.metadata, records=[],
                              termination="max_iters")
        buf = io.StringIO()
        write_trace(trace, buf)
        back = read_trace(io.StringIO(buf.getvalue()))
        assert back.metadata == config.metadata


class TestFeatureNormalization:
    def test_normalize_flag_scales_features(self, tmp_path):
        path = tmp_path / "wide.libsvm"
        path.write_text("1 1:10 2:0.5\n-1 1:-20 2:0.25\n")
        base = (f"problem:\n  kind: logistic\n  data: {path}\n  reg_coef: 0.01\n"
                "sketch: {kind: coord, tau: 1}\n")
        raw = load_config(base).problem.a
        np.testing.assert_allclose(np.abs(raw).max(axis=1), [20.0, 0.5])
        scaled = load_config(base.replace("reg_coef: 0.01",
                                          "reg_coef: 0.01\n  normalize: true")).problem.a
        np.testing.assert_allclose(np.abs(scaled).max(axis=1), [1.0, 1.0])
        # zero rows stay zero rather than dividing by zero
        path2 = tmp_path / "zero.libsvm"
        path2.write_text("1 2:1\n-1 2:-1\n")
        cfg = (f"problem:\n  kind: logistic\n  data: {path2}\n  reg_coef: 0.01\n"
               "  normalize: true\nsketch: {kind: coord, tau: 1}\n")
        a = load_config(cfg).problem.a
        np.testing.assert_array_equal(a[0], [0.0, 0.0])

    def test_declared_d_extends_dimension(self, tmp_path):
        path = tmp_path / "d.libsvm"
        path.write_text("1 1:1\n-1 1:-1\n")
        cfg = (f"problem:\n  kind: logistic\n  data: {path}\n  declared_d: 3\n"
               "  reg_coef: 0.01\nsketch: {kind: coord, tau: 1}\n")
        assert load_config(cfg).problem.dim == 3


class TestResolvedDefaultsRecorded:
    def test_problem_defaults_in_metadata(self):
        config = load_config(
            "problem: {kind: logistic, dim: 4, n: 30}\n"
            "sketch: {kind: svd, tau: 2}\n")
        assert config.metadata["problem.seed"] == "0"
        assert float(config.metadata["problem.reg_coef"]) > 0
        assert config.metadata["sketch.svd_tol"] == "1e-08"

    def test_barrier_defaults_in_metadata(self):
        config = load_config(
            "problem: {kind: barrier, dim: 3, constraints: 6}\n"
            "solver: {method: newton}\n")
        assert config.metadata["problem.barrier_weight"] == "1.0"
        assert config.metadata["problem.seed"] == "0"
