"""Restarted PDHG for standard-form LPs.

One iteration performs the primal-then-dual update

    x_{k+1} = Proj_{l <= x <= u}( x_k - tau * (c - G'y_k) )
    y_{k+1} = Proj_{y >= 0}     ( y_k + sigma * (h - 2*G x_{k+1} + G x_k) )

and maintains the running averages of the iterates produced since the last
restart.  With ``tau * sigma * ||G||^2 < 1`` the averages carry the classical
O(1/k) primal-dual gap guarantee; ``ergodic_gap_bound`` evaluates that bound
so callers can verify it numerically.

A solve is single-threaded and bit-deterministic.  Distinct solves may run
concurrently on shared (read-only) instances.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .linalg import estimate_spectral_norm
from .model import KktReport, LpInstance, kkt_residuals, project_box, project_nonneg

__all__ = [
    "RestartPolicy",
    "SolverConfig",
    "WarmStart",
    "SolverResult",
    "HistoryRecord",
    "STATUS_OPTIMAL",
    "STATUS_ITER_LIMIT",
    "STATUS_NUMERICAL_FAILURE",
    "default_step_sizes",
    "solve",
    "restart_due",
    "ergodic_gap_bound",
    "iterate_sequence",
]

STATUS_OPTIMAL = "optimal"
STATUS_ITER_LIMIT = "iter_limit"
STATUS_NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class RestartPolicy:
    """Restart rule: ``none``, ``adaptive(beta)`` or ``fixed(period)``.

    Adaptive restarts fire when, at a check point, the running average's
    max-KKT residual has contracted to ``beta`` times the residual recorded at
    the previous restart point.  Fixed restarts fire unconditionally every
    ``period`` iterations.  A restart sets the iterate to the running average
    and resets the average.
    """

    kind: str = "adaptive"
    beta: float = 0.5
    period: int = 0
    check_period: int = 40

    def __post_init__(self):
        if self.kind not in ("none", "adaptive", "fixed"):
            raise UsageError(f"unknown restart policy {self.kind!r}")
        if self.kind == "adaptive" and not 0.0 < self.beta < 1.0:
            raise UsageError("adaptive beta must lie in (0, 1)")
        if self.kind == "fixed" and self.period < 1:
            raise UsageError("fixed restart period must be >= 1")
        if self.check_period < 1:
            raise UsageError("check_period must be >= 1")

    @classmethod
    def none(cls):
        return cls(kind="none")

    @classmethod
    def adaptive(cls, beta: float = 0.5, check_period: int = 40):
        return cls(kind="adaptive", beta=beta, check_period=check_period)

    @classmethod
    def fixed(cls, period: int):
        return cls(kind="fixed", period=period)


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, tolerance and restart behavior for one solve.

    ``tau``/``sigma`` of ``None`` are filled in from ``default_step_sizes``,
    which guarantees ``tau * sigma * ||G||^2 < 1``.
    """

    tau: float | None = None
    sigma: float | None = None
    tol: float = 1e-8
    max_iter: int = 200_000
    restart: RestartPolicy = field(default_factory=RestartPolicy)
    record_history: bool = False

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise UsageError("tau must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise UsageError("sigma must be positive")
        if self.tol <= 0:
            raise UsageError("tol must be positive")
        if self.max_iter < 1:
            raise UsageError("max_iter must be >= 1")


@dataclass(frozen=True)
class WarmStart:
    """A feasible start point; callers project before handing it over."""

    x0: np.ndarray
    y0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.ascontiguousarray(self.x0, dtype=np.float64))
        object.__setattr__(self, "y0", np.ascontiguousarray(self.y0, dtype=np.float64))
        if not (np.all(np.isfinite(self.x0)) and np.all(np.isfinite(self.y0))):
            raise UsageError("warm-start point must be finite")

    def validate_for(self, inst: LpInstance):
        if self.x0.shape != (inst.num_vars,) or self.y0.shape != (inst.num_cons,):
            raise UsageError(
                f"warm start shaped {self.x0.shape}/{self.y0.shape} does not fit "
                f"an instance with {inst.num_vars} vars / {inst.num_cons} cons"
            )
        if np.any(self.x0 < inst.l) or np.any(self.x0 > inst.u) or np.any(self.y0 < 0):
            raise UsageError("warm start must satisfy l <= x0 <= u and y0 >= 0")


@dataclass(frozen=True)
class HistoryRecord:
    iteration: int
    kkt: KktReport
    avg_x: np.ndarray
    avg_y: np.ndarray


@dataclass(frozen=True)
class SolverResult:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    restarts: int
    status: str
    final_kkt: KktReport
    solve_seconds: float
    tau: float
    sigma: float
    history: list[HistoryRecord] | None = None

    @property
    def objective(self) -> float:
        return self.final_kkt.objective


def default_step_sizes(inst: LpInstance) -> tuple[float, float]:
    """tau = sigma = 0.9 / ||G||_2, estimated by power iteration.

    The 0.9 safety factor keeps tau * sigma * ||G||^2 <= 0.81 / (1 - tol)^2,
    strictly below 1.  A zero matrix gets unit steps and a warning.
    """
    norm = estimate_spectral_norm(inst.G)
    if norm == 0.0:
        warnings.warn("instance matrix is all zeros; using unit step sizes", stacklevel=2)
        return 1.0, 1.0
    s = 0.9 / norm
    return s, s


def restart_due(policy: RestartPolicy, since_restart: int, avg_max_kkt: float | None, anchor_max_kkt: float) -> bool:
    """Decide whether a restart fires, given iterations since the last one.

    For the adaptive rule, ``avg_max_kkt`` is the running average's max-KKT
    residual and ``anchor_max_kkt`` the residual recorded at the previous
    restart point; the comparison is inclusive.
    """
    if since_restart < 1 or policy.kind == "none":
        return False
    if policy.kind == "fixed":
        return since_restart >= policy.period
    return avg_max_kkt is not None and avg_max_kkt <= policy.beta * anchor_max_kkt


def _step(inst: LpInstance, x, y, gx, gty, tau, sigma):
    x_new = project_box(x - tau * (inst.c - gty), inst.l, inst.u)
    gx_new = inst.G.matvec(x_new)
    y_new = project_nonneg(y + sigma * (inst.h - 2.0 * gx_new + gx))
    gty_new = inst.G.rmatvec(y_new)
    return x_new, y_new, gx_new, gty_new


def solve(inst: LpInstance, cfg: SolverConfig | None = None, warm: WarmStart | None = None) -> SolverResult:
    """Run PDHG until the current iterate passes the KKT test or limits hit.

    Starts from ``warm`` or from the zero pair.  Returns the terminal iterate
    (never the average); the running averages are exposed per iteration via
    ``record_history`` for diagnostic use on small problems.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    n, m = inst.num_vars, inst.num_cons

    tau, sigma = cfg.tau, cfg.sigma
    if tau is None or sigma is None:
        d_tau, d_sigma = default_step_sizes(inst)
        tau = d_tau if tau is None else tau
        sigma = d_sigma if sigma is None else sigma

    if warm is not None:
        warm.validate_for(inst)
        x, y = warm.x0.copy(), warm.y0.copy()
    else:
        x, y = np.zeros(n), np.zeros(m)

    gx = inst.G.matvec(x)
    gty = inst.G.rmatvec(y)
    anchor_kkt = kkt_residuals(inst, x, y, gx, gty).max_residual

    avg_x, avg_y = np.zeros(n), np.zeros(m)
    since_restart = 0
    restarts = 0
    history: list[HistoryRecord] | None = [] if cfg.record_history else None
    status = STATUS_ITER_LIMIT
    iterations = 0
    kkt = kkt_residuals(inst, x, y, gx, gty)

    for _ in range(cfg.max_iter):
        x, y, gx, gty = _step(inst, x, y, gx, gty, tau, sigma)
        iterations += 1
        since_restart += 1
        avg_x += (x - avg_x) / since_restart
        avg_y += (y - avg_y) / since_restart

        kkt = kkt_residuals(inst, x, y, gx, gty)
        if history is not None:
            history.append(HistoryRecord(iterations, kkt, avg_x.copy(), avg_y.copy()))
        if not np.isfinite(kkt.max_residual):
            status = STATUS_NUMERICAL_FAILURE
            break
        if kkt.within(cfg.tol):
            status = STATUS_OPTIMAL
            break

        policy = cfg.restart
        if policy.kind == "fixed":
            if restart_due(policy, since_restart, None, anchor_kkt):
                x = project_box(avg_x, inst.l, inst.u)
                y = project_nonneg(avg_y)
                gx, gty = inst.G.matvec(x), inst.G.rmatvec(y)
                anchor_kkt = kkt_residuals(inst, x, y, gx, gty).max_residual
                avg_x, avg_y = np.zeros(n), np.zeros(m)
                since_restart = 0
                restarts += 1
        elif policy.kind == "adaptive" and since_restart % policy.check_period == 0:
            gx_avg = inst.G.matvec(avg_x)
            gty_avg = inst.G.rmatvec(avg_y)
            avg_kkt = kkt_residuals(inst, avg_x, avg_y, gx_avg, gty_avg).max_residual
            if restart_due(policy, since_restart, avg_kkt, anchor_kkt):
                x = project_box(avg_x, inst.l, inst.u)
                y = project_nonneg(avg_y)
                gx, gty = inst.G.matvec(x), inst.G.rmatvec(y)
                anchor_kkt = avg_kkt
                avg_x, avg_y = np.zeros(n), np.zeros(m)
                since_restart = 0
                restarts += 1

    return SolverResult(
        x=x,
        y=y,
        iterations=iterations,
        restarts=restarts,
        status=status,
        final_kkt=kkt,
        solve_seconds=time.perf_counter() - t0,
        tau=tau,
        sigma=sigma,
        history=history,
    )


def ergodic_gap_bound(x, y, x0, y0, inst: LpInstance, tau: float, sigma: float, k: int) -> float:
    """Closed-form O(1/k) bound on the averaged iterates' primal-dual gap.

    Evaluates (1/2k) * ( ||x-x0||^2/tau + ||y-y0||^2/sigma
                         - (y-y0)' G (x-x0) ).
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    if tau <= 0 or sigma <= 0:
        raise UsageError("step sizes must be positive")
    dx = np.asarray(x, dtype=np.float64) - np.asarray(x0, dtype=np.float64)
    dy = np.asarray(y, dtype=np.float64) - np.asarray(y0, dtype=np.float64)
    quad = float(dx @ dx) / tau + float(dy @ dy) / sigma - float(dy @ inst.G.matvec(dx))
    return quad / (2.0 * k)


def iterate_sequence(inst: LpInstance, tau: float, sigma: float, steps: int, x0=None, y0=None):
    """Plain PDHG trajectory (no restarts, no termination) for verification.

    Returns ``(xs, ys, xbars, ybars)`` where index k holds the k-th iterate
    and the average of iterates 1..k; index 0 holds the start point in ``xs``
    and ``ys`` and the start point itself as the (empty) average.
    """
    x = np.zeros(inst.num_vars) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    y = np.zeros(inst.num_cons) if y0 is None else np.asarray(y0, dtype=np.float64).copy()
    gx, gty = inst.G.matvec(x), inst.G.rmatvec(y)
    xs, ys = [x.copy()], [y.copy()]
    xbars, ybars = [x.copy()], [y.copy()]
    sum_x, sum_y = np.zeros_like(x), np.zeros_like(y)
    for k in range(1, steps + 1):
        x, y, gx, gty = _step(inst, x, y, gx, gty, tau, sigma)
        sum_x += x
        sum_y += y
        xs.append(x.copy())
        ys.append(y.copy())
        xbars.append(sum_x / k)
        ybars.append(sum_y / k)
    return xs, ys, xbars, ybars
