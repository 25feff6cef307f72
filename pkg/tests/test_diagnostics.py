"""Momentum diagnostics, trace annotation, and trace serialization."""

import numpy as np
import pytest

from steplab.diagnostics import (
    ReferencePoint,
    TraceRow,
    TrainTrace,
    alignment,
    annotate_alignment,
    config_fingerprint,
    scale,
)
from steplab.optim import HyperParams, ScheduleSpec, train
from steplab.problems import make_quadratic


class TestScale:
    def test_equal_vectors(self):
        g = np.array([1.0, 2.0])
        assert scale(g, g) == 1.0

    def test_zero_buffer(self):
        assert scale(np.zeros(3), np.ones(3)) == 0.0

    def test_zero_gradient_is_undefined(self):
        assert scale(np.ones(3), np.zeros(3)) is None

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            scale(np.zeros(2), np.zeros(3))

    def test_simultaneous_rescaling_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            g = rng.standard_normal(5)
            grad = rng.standard_normal(5)
            c = float(rng.uniform(0.1, 10.0))
            assert scale(c * g, c * grad) == pytest.approx(scale(g, grad), rel=1e-12)


class TestAlignment:
    def test_collinear_descent(self):
        # scalar quadratic at w=1 with optimum 0: gradient 2 points uphill,
        # the descent direction points straight at the optimum
        ref = ReferencePoint(np.array([0.0]))
        assert alignment(np.array([2.0]), np.array([1.0]), ref) == 1.0

    def test_antiparallel(self):
        ref = ReferencePoint(np.array([0.0]))
        assert alignment(np.array([-2.0]), np.array([1.0]), ref) == -1.0

    def test_orthogonal(self):
        ref = ReferencePoint(np.array([0.0, 1.0]))
        s = alignment(np.array([1.0, 0.0]), np.array([0.0, 0.0]), ref)
        assert s == pytest.approx(0.0, abs=1e-15)

    def test_zero_norms_are_undefined(self):
        ref = ReferencePoint(np.array([0.0, 0.0]))
        assert alignment(np.zeros(2), np.ones(2), ref) is None
        assert alignment(np.ones(2), np.zeros(2), ref) is None

    def test_positive_rescaling_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            g = rng.standard_normal(4)
            w = rng.standard_normal(4)
            x_star = rng.standard_normal(4)
            c = float(rng.uniform(0.01, 100.0))
            base = alignment(g, w, ReferencePoint(x_star))
            scaled_g = alignment(c * g, w, ReferencePoint(x_star))
            assert scaled_g == pytest.approx(base, abs=1e-12)
            stretched = ReferencePoint(w + c * (x_star - w))
            assert alignment(g, w, stretched) == pytest.approx(base, abs=1e-12)

    def test_result_clipped_to_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            s = alignment(
                rng.standard_normal(3), rng.standard_normal(3), ReferencePoint(rng.standard_normal(3))
            )
            assert -1.0 <= s <= 1.0

    def test_reference_source_validated(self):
        with pytest.raises(ValueError):
            ReferencePoint(np.zeros(2), source="guess")


def quadratic_trace(mu=0.9, store_snapshots=True, iters=150):
    problem = make_quadratic(6, 80.0, seed=4)
    spec = ScheduleSpec.single_phase(HyperParams(2e-3, momentum=mu))
    return problem, train(
        problem, spec, epochs=1, iters_per_epoch=iters, seed=5, store_snapshots=store_snapshots
    )


class TestAnnotateAlignment:
    def test_matches_online_alignment_for_known_optimum(self):
        problem, (_, trace) = quadratic_trace()
        annotated = annotate_alignment(trace, ReferencePoint(problem.optimum_hint))
        for online, redone in zip(trace.rows, annotated.rows):
            assert online.alignment == redone.alignment

    def test_final_iterate_reference_leaves_last_row_undefined(self):
        _, (state, trace) = quadratic_trace()
        annotated = annotate_alignment(trace, ReferencePoint(state.w, "final_iterate"))
        assert annotated.rows[-1].alignment is None
        assert any(r.alignment is not None for r in annotated.rows[:-1])

    def test_idempotent(self):
        _, (state, trace) = quadratic_trace()
        ref = ReferencePoint(state.w, "final_iterate")
        once = annotate_alignment(trace, ref)
        twice = annotate_alignment(once, ref)
        assert once.rows == twice.rows

    def test_missing_snapshots_rejected(self):
        _, (state, trace) = quadratic_trace(store_snapshots=False)
        with pytest.raises(ValueError, match="snapshots"):
            annotate_alignment(trace, ReferencePoint(state.w, "final_iterate"))

    def test_scale_converges_to_momentum_limit(self):
        problem = make_quadratic(100, 1e5, seed=7)
        spec = ScheduleSpec.single_phase(HyperParams(1.184e-5, momentum=0.9))
        _, trace = train(problem, spec, epochs=1, iters_per_epoch=10000, seed=3)
        assert trace.scale_tail_mean(0.1) == pytest.approx(10.0, rel=0.05)


class TestTraceSerialization:
    def test_csv_round_trip_is_lossless(self):
        _, (_, trace) = quadratic_trace(iters=60)
        back = TrainTrace.from_csv(trace.to_csv())
        assert back.rows == trace.rows

    def test_csv_file_round_trip(self, tmp_path):
        _, (_, trace) = quadratic_trace(iters=40)
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        assert TrainTrace.from_csv(path).rows == trace.rows

    def test_json_round_trip_keeps_fingerprint(self, tmp_path):
        _, (_, trace) = quadratic_trace(iters=40)
        path = tmp_path / "trace.json"
        trace.to_json(path)
        back = TrainTrace.from_json(path)
        assert back.rows == trace.rows
        assert back.config_fingerprint == trace.config_fingerprint
        assert back.best_step == trace.best_step

    def test_none_fields_survive_round_trip(self):
        rows = [
            TraceRow(0, 0, 0, 1.0, 0.0, 0.0, None, None, None),
            TraceRow(1, 0, 0, 0.5, 2.0, 1.0, 0.5, 0.25, 0.05),
        ]
        trace = TrainTrace(rows=rows)
        back = TrainTrace.from_csv(trace.to_csv())
        assert back.rows == rows

    def test_unexpected_header_rejected(self):
        with pytest.raises(ValueError, match="header"):
            TrainTrace.from_csv("a,b,c\n1,2,3\n")

    def test_rows_must_increase_in_step(self):
        rows = [
            TraceRow(1, 0, 0, 1.0, 1.0, 1.0, 1.0, None, 0.1),
            TraceRow(1, 0, 0, 1.0, 1.0, 1.0, 1.0, None, 0.1),
        ]
        with pytest.raises(ValueError, match="increasing"):
            TrainTrace(rows=rows)


class TestFingerprint:
    def test_key_order_invariant(self):
        a = config_fingerprint({"x": 1, "y": [1.5, 2.5]})
        b = config_fingerprint({"y": [1.5, 2.5], "x": 1})
        assert a == b

    def test_value_sensitivity(self):
        assert config_fingerprint({"x": 1}) != config_fingerprint({"x": 2})

    def test_stable_under_reserialization(self):
        _, (_, trace) = quadratic_trace(iters=30)
        back = TrainTrace.from_json(trace.to_json())
        assert back.config_fingerprint == trace.config_fingerprint


class TestTraceStats:
    def test_tail_mean_window(self):
        rows = [
            TraceRow(t, 0, 0, 1.0, 1.0, float(t), float(t), None, None) for t in range(10)
        ]
        trace = TrainTrace(rows=rows)
        assert trace.scale_tail_mean(0.2) == pytest.approx((8 + 9) / 2)
        with pytest.raises(ValueError):
            trace.scale_tail_mean(0.0)

    def test_alignment_run_mean_skips_undefined(self):
        rows = [
            TraceRow(0, 0, 0, 1.0, 1.0, 0.0, None, None, None),
            TraceRow(1, 0, 0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.1),
            TraceRow(2, 0, 0, 1.0, 1.0, 1.0, 1.0, 0.7, 0.1),
        ]
        trace = TrainTrace(rows=rows)
        assert trace.alignment_run_mean() == pytest.approx(0.6)
