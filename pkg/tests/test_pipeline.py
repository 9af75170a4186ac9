import numpy as np
import pytest

from pdhgnet.errors import UsageError
from pdhgnet.generators import PageRankSpec, gen_pagerank, gen_random_solvable
from pdhgnet.model import project_box, project_nonneg
from pdhgnet.net import construct_theta_pdhg, init_params, zeros_like_params
from pdhgnet.pipeline import (
    RunRecord,
    extrapolation_study,
    improvement_ratio,
    records_from_two_stage,
    timing_report,
    two_stage_solve,
)
from pdhgnet.solver import SolverConfig, WarmStart, iterate_sequence, solve


class TestImprovementRatio:
    def test_equal_is_zero(self):
        assert improvement_ratio(10.0, 10.0) == 0.0

    def test_half_is_point_five(self):
        assert improvement_ratio(10.0, 5.0) == pytest.approx(0.5)

    def test_worse_goes_negative(self):
        assert improvement_ratio(10.0, 15.0) == pytest.approx(-0.5)

    def test_nonpositive_baseline_rejected(self):
        with pytest.raises(UsageError):
            improvement_ratio(0.0, 1.0)


class TestTwoStage:
    def test_zero_net_equals_cold(self):
        # needs 0 inside the box, otherwise the projected zero prediction is
        # a different start point than the literal zero cold start
        from pdhgnet.model import LpInstance

        raw, _, _ = gen_random_solvable(12, 9, seed=0)
        inst = LpInstance(
            G=raw.G, c=raw.c, h=raw.h, l=np.minimum(raw.l, 0.0), u=np.maximum(raw.u, 0.0)
        )
        params = zeros_like_params(init_params(2, 10, tau=0.1, sigma=0.1, seed=0))
        cfg = SolverConfig(tol=1e-8)
        result = two_stage_solve(inst, params, cfg, compare_cold=True)
        # zero prediction projects to the same start the cold run uses
        assert result.warm_result.iterations == result.cold_result.iterations
        assert np.array_equal(result.warm_result.x, result.cold_result.x)
        assert result.improvement_iters == pytest.approx(0.0)

    def test_exact_weights_match_manual_average_start(self):
        inst, _, _ = gen_random_solvable(10, 8, seed=1)
        tau = sigma = 0.4
        K = 4
        params = construct_theta_pdhg(K, 10, tau, sigma)
        cfg = SolverConfig(tau=tau, sigma=sigma, tol=1e-8)
        result = two_stage_solve(inst, params, cfg)
        _, _, xbars, ybars = iterate_sequence(inst, tau, sigma, K)
        manual = solve(
            inst,
            cfg,
            warm=WarmStart(project_box(xbars[K], inst.l, inst.u), project_nonneg(ybars[K])),
        )
        assert result.warm_result.iterations == manual.iterations

    def test_prediction_is_feasible(self):
        inst, _, _ = gen_random_solvable(10, 8, seed=2)
        params = init_params(2, 10, tau=0.2, sigma=0.2, seed=3)
        result = two_stage_solve(inst, params, SolverConfig(tol=1e-6, max_iter=5000))
        assert np.all(result.prediction_x >= inst.l)
        assert np.all(result.prediction_x <= inst.u)
        assert np.all(result.prediction_y >= 0)

    def test_label_start_beats_cold_on_pagerank(self):
        inst = gen_pagerank(PageRankSpec(nodes=300, seed=4))
        label = solve(inst, SolverConfig(tol=1e-10))
        cfg = SolverConfig(tol=1e-8)
        cold = solve(inst, cfg)
        warm = solve(
            inst,
            cfg,
            warm=WarmStart(project_box(label.x, inst.l, inst.u), project_nonneg(label.y)),
        )
        assert warm.iterations <= cold.iterations

    def test_iteration_counts_reproducible(self):
        inst, _, _ = gen_random_solvable(10, 8, seed=3)
        params = init_params(2, 10, tau=0.2, sigma=0.2, seed=1)
        cfg = SolverConfig(tol=1e-7)
        a = two_stage_solve(inst, params, cfg, compare_cold=True)
        b = two_stage_solve(inst, params, cfg, compare_cold=True)
        assert a.warm_result.iterations == b.warm_result.iterations
        assert a.cold_result.iterations == b.cold_result.iterations
        assert np.array_equal(a.prediction_x, b.prediction_x)


class TestExtrapolation:
    def setup_rows(self, alphas=(0.0, 0.5, 1.0)):
        inst, x_star, y_star = gen_random_solvable(12, 10, seed=5)
        rng = np.random.default_rng(6)
        pred = (
            project_box(x_star + 0.5 * rng.standard_normal(12), inst.l, inst.u),
            project_nonneg(y_star + 0.5 * rng.standard_normal(10)),
        )
        cfg = SolverConfig(tol=1e-8)
        return inst, (x_star, y_star), pred, extrapolation_study(inst, (x_star, y_star), pred, alphas, cfg), cfg

    def test_alpha_zero_is_label_start(self):
        _, _, _, rows, _ = self.setup_rows()
        assert rows[0].alpha == 0.0
        assert rows[0].start_distance == 0.0

    def test_alpha_one_matches_direct_warm_run(self):
        inst, label, pred, rows, cfg = self.setup_rows()
        direct = solve(inst, cfg, warm=WarmStart(pred[0], pred[1]))
        row1 = [r for r in rows if r.alpha == 1.0][0]
        assert row1.iterations == direct.iterations

    def test_rows_sorted_by_alpha(self):
        _, _, _, rows, _ = self.setup_rows(alphas=(1.0, 0.0, 2.0, 0.5))
        assert [r.alpha for r in rows] == [0.0, 0.5, 1.0, 2.0]

    def test_negative_alpha_rejected(self):
        inst, label, pred, _, cfg = self.setup_rows()
        with pytest.raises(UsageError):
            extrapolation_study(inst, label, pred, [-0.5], cfg)

    def test_distance_grows_with_alpha_before_projection_binds(self):
        _, _, _, rows, _ = self.setup_rows(alphas=(0.0, 0.5, 1.0))
        d = [r.start_distance for r in rows]
        assert d[0] <= d[1] <= d[2]


class TestTimingReport:
    def make_result(self, size, inf_s, solve_s):
        import dataclasses

        inst, _, _ = gen_random_solvable(size, 4, seed=size)
        res = solve(inst, SolverConfig(tol=1e-4, max_iter=50))
        res = dataclasses.replace(res, solve_seconds=solve_s)
        from pdhgnet.pipeline import TwoStageResult

        return TwoStageResult(
            instance_name=f"i{size}",
            num_vars=size,
            num_cons=4,
            prediction_x=np.zeros(size),
            prediction_y=np.zeros(4),
            warm_result=res,
            cold_result=None,
            inference_seconds=inf_s,
            improvement_time=None,
            improvement_iters=None,
        )

    def test_single_row(self):
        rows = timing_report([self.make_result(5, 0.1, 0.2)])
        assert len(rows) == 1
        assert rows[0].ratio == pytest.approx(0.5)

    def test_zero_solve_time_flagged_infinite(self):
        rows = timing_report([self.make_result(5, 0.1, 0.0)])
        assert np.isinf(rows[0].ratio)

    def test_grouping_and_order(self):
        results = [
            self.make_result(10, 0.1, 1.0),
            self.make_result(5, 0.1, 0.5),
            self.make_result(10, 0.3, 1.0),
        ]
        rows = timing_report(results)
        assert [r.size for r in rows] == [5, 10]
        assert rows[1].runs == 2
        assert rows[1].inference_seconds == pytest.approx(0.2)

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            timing_report([])


class TestRecords:
    def test_warm_only(self):
        inst, _, _ = gen_random_solvable(8, 6, seed=7)
        params = zeros_like_params(init_params(1, 10, tau=0.1, sigma=0.1, seed=0))
        result = two_stage_solve(inst, params, SolverConfig(tol=1e-6, max_iter=5000))
        records = records_from_two_stage(result)
        assert len(records) == 1
        assert records[0].mode == "warm"
        assert records[0].improvement_iters is None

    def test_with_cold(self):
        inst, _, _ = gen_random_solvable(8, 6, seed=7)
        params = zeros_like_params(init_params(1, 10, tau=0.1, sigma=0.1, seed=0))
        result = two_stage_solve(inst, params, SolverConfig(tol=1e-6, max_iter=5000), compare_cold=True)
        records = records_from_two_stage(result)
        assert [r.mode for r in records] == ["warm", "cold"]
        assert records[0].improvement_iters is not None
