"""Two-stage solving: network prediction, projection, warm-started PDHG.

The experiment helpers mirror the evaluation protocols used throughout the
package: paired cold/warm comparisons with improvement ratios, warm starts
extrapolated at varying distances from a reference solution, and the
inference-versus-solve time accounting across instance sizes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .model import LpInstance, project_box, project_nonneg
from .net import NetParams, build_inputs, forward
from .solver import SolverConfig, SolverResult, WarmStart, solve

__all__ = [
    "TwoStageResult",
    "ExtrapolationRow",
    "TimingRow",
    "RunRecord",
    "two_stage_solve",
    "improvement_ratio",
    "extrapolation_study",
    "timing_report",
    "records_from_two_stage",
]


@dataclass(frozen=True)
class TwoStageResult:
    instance_name: str
    num_vars: int
    num_cons: int
    prediction_x: np.ndarray
    prediction_y: np.ndarray
    warm_result: SolverResult
    cold_result: SolverResult | None
    inference_seconds: float
    improvement_time: float | None
    improvement_iters: float | None


@dataclass(frozen=True)
class ExtrapolationRow:
    alpha: float
    start_distance: float
    iterations: int
    solve_seconds: float


@dataclass(frozen=True)
class TimingRow:
    size: int
    runs: int
    inference_seconds: float
    solve_seconds: float
    ratio: float


@dataclass(frozen=True)
class RunRecord:
    """One report line; improvement fields stay None without a baseline."""

    instance: str
    n: int
    m: int
    mode: str
    iterations: int
    restarts: int
    seconds: float
    improvement_time: float | None = None
    improvement_iters: float | None = None


def improvement_ratio(baseline: float, ours: float) -> float:
    """(baseline - ours) / baseline; negative when ours is worse, never clamped."""
    if baseline <= 0:
        raise UsageError("improvement ratio needs a positive baseline")
    return (baseline - ours) / baseline


def two_stage_solve(
    inst: LpInstance,
    params: NetParams,
    solver_cfg: SolverConfig | None = None,
    compare_cold: bool = False,
    bound_cap: float | None = None,
) -> TwoStageResult:
    """Predict a start point with the network, project it, then solve warm.

    With ``compare_cold`` the same configuration is also solved from the zero
    start and the improvement ratios are filled in.
    """
    solver_cfg = solver_cfg or SolverConfig()
    t0 = time.perf_counter()
    if bound_cap is None:
        X0, Y0 = build_inputs(inst)
    else:
        X0, Y0 = build_inputs(inst, bound_cap)
    x_raw, y_raw, _ = forward(params, inst, X0, Y0)
    x_hat = project_box(x_raw, inst.l, inst.u)
    y_hat = project_nonneg(y_raw)
    inference_seconds = time.perf_counter() - t0

    warm_result = solve(inst, solver_cfg, warm=WarmStart(x_hat, y_hat))
    cold_result = solve(inst, solver_cfg) if compare_cold else None

    improvement_time = improvement_iters = None
    if cold_result is not None:
        if cold_result.solve_seconds > 0:
            improvement_time = improvement_ratio(cold_result.solve_seconds, warm_result.solve_seconds)
        if cold_result.iterations > 0:
            improvement_iters = improvement_ratio(cold_result.iterations, warm_result.iterations)

    return TwoStageResult(
        instance_name=inst.name,
        num_vars=inst.num_vars,
        num_cons=inst.num_cons,
        prediction_x=x_hat,
        prediction_y=y_hat,
        warm_result=warm_result,
        cold_result=cold_result,
        inference_seconds=inference_seconds,
        improvement_time=improvement_time,
        improvement_iters=improvement_iters,
    )


def extrapolation_study(
    inst: LpInstance,
    label,
    prediction,
    alphas,
    solver_cfg: SolverConfig | None = None,
) -> list[ExtrapolationRow]:
    """Warm-start from points z* + alpha * (prediction - z*), projected feasible.

    alpha = 0 starts at the label itself, alpha = 1 at the prediction, and
    alpha > 1 walks past it; rows come back sorted by alpha.
    """
    solver_cfg = solver_cfg or SolverConfig()
    x_star = np.asarray(label[0], dtype=np.float64)
    y_star = np.asarray(label[1], dtype=np.float64)
    z0_x = np.asarray(prediction[0], dtype=np.float64)
    z0_y = np.asarray(prediction[1], dtype=np.float64)
    if x_star.shape != z0_x.shape or y_star.shape != z0_y.shape:
        raise UsageError("label and prediction dimensions differ")

    rows = []
    for alpha in sorted(float(a) for a in alphas):
        if alpha < 0:
            raise UsageError("alpha must be nonnegative")
        start_x = project_box(x_star + alpha * (z0_x - x_star), inst.l, inst.u)
        start_y = project_nonneg(y_star + alpha * (z0_y - y_star))
        dist = float(
            np.sqrt(np.linalg.norm(start_x - x_star) ** 2 + np.linalg.norm(start_y - y_star) ** 2)
        )
        res = solve(inst, solver_cfg, warm=WarmStart(start_x, start_y))
        rows.append(
            ExtrapolationRow(
                alpha=alpha,
                start_distance=dist,
                iterations=res.iterations,
                solve_seconds=res.solve_seconds,
            )
        )
    return rows


def timing_report(results) -> list[TimingRow]:
    """Aggregate inference/solve seconds by instance size (number of variables).

    The per-size ratio is the mean of per-run inference/solve ratios; a zero
    solve time is flagged as an infinite ratio rather than an error.  Rows are
    sorted by size so the trend is directly visible; no monotonicity is
    asserted here.
    """
    results = list(results)
    if not results:
        raise UsageError("timing report needs at least one result")
    by_size: dict[int, list[TwoStageResult]] = {}
    for r in results:
        by_size.setdefault(r.num_vars, []).append(r)
    rows = []
    for size in sorted(by_size):
        group = by_size[size]
        ratios = [
            (r.inference_seconds / r.warm_result.solve_seconds) if r.warm_result.solve_seconds > 0 else np.inf
            for r in group
        ]
        rows.append(
            TimingRow(
                size=size,
                runs=len(group),
                inference_seconds=float(np.mean([r.inference_seconds for r in group])),
                solve_seconds=float(np.mean([r.warm_result.solve_seconds for r in group])),
                ratio=float(np.mean(ratios)),
            )
        )
    return rows


def records_from_two_stage(result: TwoStageResult) -> list[RunRecord]:
    """Report rows for one two-stage run (warm row, plus cold when present)."""
    rows = [
        RunRecord(
            instance=result.instance_name,
            n=result.num_vars,
            m=result.num_cons,
            mode="warm",
            iterations=result.warm_result.iterations,
            restarts=result.warm_result.restarts,
            seconds=result.warm_result.solve_seconds,
            improvement_time=result.improvement_time,
            improvement_iters=result.improvement_iters,
        )
    ]
    if result.cold_result is not None:
        rows.append(
            RunRecord(
                instance=result.instance_name,
                n=result.num_vars,
                m=result.num_cons,
                mode="cold",
                iterations=result.cold_result.iterations,
                restarts=result.cold_result.restarts,
                seconds=result.cold_result.solve_seconds,
            )
        )
    return rows
