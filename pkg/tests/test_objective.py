"""Tests for evaluation bookkeeping, caching and the estimation trick."""

import numpy as np
import pytest

import tnale.objective as objective_mod
from tnale.objective import (BudgetExceededError, EvaluationCache, Evaluator,
                             ObjectiveConfig, derive_rng, estimate_rank_sweep,
                             read_trace_csv, write_trace_csv)
from tnale.solver import SolverConfig
from tnale.structure import compression_ratio
from tnale.tensor import ConformanceError

from conftest import make_target, ring_template


def small_instance(seed=11):
    s = ring_template(3, phys_dim=2).with_ranks([2, 2, 2])
    target, _ = make_target(s, seed=seed)
    return s, target


def quick_cfg(**kw):
    return ObjectiveConfig(lam=200.0,
                           solver=SolverConfig(max_iters=kw.pop("max_iters", 150)),
                           **kw)


class TestEvaluator:
    def test_cache_hit_keeps_counter(self):
        s, target = small_instance()
        ev = Evaluator(target, quick_cfg())
        first = ev.evaluate(s)
        second = ev.evaluate(s)
        assert second is first
        assert ev.eval_count == 1
        assert first.eval_index == 1

    def test_counter_counts_solver_runs(self, monkeypatch):
        s, target = small_instance()
        calls = {"n": 0}
        real = objective_mod.minimize_rse

        def counting(*args, **kw):
            calls["n"] += 1
            return real(*args, **kw)

        monkeypatch.setattr(objective_mod, "minimize_rse", counting)
        ev = Evaluator(target, quick_cfg())
        ev.evaluate(s)
        ev.evaluate(s)
        ev.evaluate(s.with_rank(0, 1))
        ev.evaluate(s.with_rank(0, 1))
        assert calls["n"] == 2
        assert ev.eval_count == 2

    def test_objective_recomposition(self):
        s, target = small_instance()
        ev = Evaluator(target, quick_cfg())
        rec = ev.evaluate(s)
        lhs = rec.objective
        rhs = 1.0 / rec.compression_ratio + 200.0 * rec.rse
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_lambda_zero_pure_compression(self):
        s, target = small_instance()
        ev = Evaluator(target, ObjectiveConfig(lam=0.0, solver=SolverConfig(max_iters=20)))
        rec = ev.evaluate(s)
        assert rec.objective == 1.0 / compression_ratio(s)

    def test_dimension_mismatch(self):
        s, target = small_instance()
        bad = ring_template(3, phys_dim=4).with_ranks([2, 2, 2])
        ev = Evaluator(target, quick_cfg())
        with pytest.raises(ConformanceError):
            ev.evaluate(bad)

    def test_budget(self):
        s, target = small_instance()
        ev = Evaluator(target, quick_cfg(), budget=2)
        ev.evaluate(s)
        ev.evaluate(s.with_rank(0, 1))
        with pytest.raises(BudgetExceededError):
            ev.evaluate(s.with_rank(1, 1))
        # cache hits still fine after exhaustion
        assert ev.evaluate(s).eval_index == 1

    def test_eval_index_strictly_increasing(self):
        s, target = small_instance()
        ev = Evaluator(target, quick_cfg())
        idx = [ev.evaluate(s.with_rank(0, r)).eval_index for r in (1, 2, 3)]
        assert idx == [1, 2, 3]

    def test_per_structure_rng_is_order_independent(self):
        s, target = small_instance()
        a, b = s.with_rank(0, 1), s.with_rank(1, 1)
        ev1 = Evaluator(target, quick_cfg())
        r1a, r1b = ev1.evaluate(a), ev1.evaluate(b)
        ev2 = Evaluator(target, quick_cfg())
        r2b, r2a = ev2.evaluate(b), ev2.evaluate(a)
        assert r1a.rse == r2a.rse
        assert r1b.rse == r2b.rse

    def test_derive_rng_stable(self):
        a = derive_rng(7, "init").integers(0, 10**9)
        b = derive_rng(7, "init").integers(0, 10**9)
        c = derive_rng(7, "restart").integers(0, 10**9)
        assert a == b
        assert a != c


class TestEstimateRankSweep:
    def test_b1_no_interpolation(self):
        seen = []

        def anchor(r):
            seen.append(r)
            return float(r * r)

        out = estimate_rank_sweep(3, 1, (1, 7), anchor)
        assert sorted(seen) == [2, 3, 4]
        assert out == {2: 4.0, 3: 9.0, 4: 16.0}

    def test_hand_interpolation(self):
        values = {2: 10.0, 3: None, 4: None, 5: 4.0}

        def anchor(r):
            return {2: 10.0, 5: 4.0}[r]

        out = estimate_rank_sweep(2, 3, (2, 7), anchor)
        assert out[3] == pytest.approx(8.0, abs=1e-12)
        assert out[4] == pytest.approx(6.0, abs=1e-12)

    def test_three_explicit_regardless_of_b(self):
        for b in (2, 3, 5):
            seen = []

            def anchor(r):
                seen.append(r)
                return float(r)

            out = estimate_rank_sweep(6, b, (1, 12), anchor)
            assert len(seen) == 3
            assert len(out) == 2 * b + 1

    def test_anchors_exact(self):
        s, target = small_instance()
        ev = Evaluator(target, quick_cfg())

        def anchor(r):
            return ev.evaluate(s.with_rank(0, r)).objective

        out = estimate_rank_sweep(2, 1, (1, 3), anchor)
        for r in (1, 2, 3):
            assert out[r] == ev.evaluate(s.with_rank(0, r)).objective

    def test_degenerate_single_point(self):
        out = estimate_rank_sweep(1, 2, (1, 1), lambda r: 5.0)
        assert out == {1: 5.0}

    def test_clamped_left(self):
        out = estimate_rank_sweep(1, 2, (1, 7), lambda r: float(r))
        assert set(out) == {1, 2, 3}


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        s, target = small_instance()
        ev = Evaluator(target, quick_cfg())
        ev.evaluate(s)
        ev.note_estimated(s.with_rank(0, 3), 4.5)
        path = tmp_path / "trace.csv"
        write_trace_csv(ev.log, path)
        rows = read_trace_csv(path)
        assert len(rows) == 2
        assert rows[0]["estimated"] is False
        assert rows[1]["estimated"] is True
        assert rows[0]["objective"] == ev.log[0].objective

    def test_empty_trace_rejected(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_trace_csv([], path)
        with pytest.raises(ValueError):
            read_trace_csv(path)
