"""Training loop for the unrolled network.

Labels are near-optimal primal-dual pairs produced by the solver at a tight
tolerance; the loss is the dataset mean of the squared l2 prediction error.
Optimization is mini-batch Adam over the flattened parameter vector with
per-instance gradients averaged at the parameter level, which works across
batches of mixed instance sizes because the channel weights are
size-independent.  The returned parameters are the snapshot from the epoch
with the lowest validation loss.

Everything is seeded: a fixed TrainConfig reproduces the exact history.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalFailureError, UsageError
from .model import LpInstance, kkt_residuals
from .net import (
    DEFAULT_BOUND_CAP,
    NetParams,
    backward,
    build_inputs,
    flatten_params,
    forward,
    init_params,
    instance_loss,
    unflatten_params,
)
from .solver import STATUS_OPTIMAL, SolverConfig, default_step_sizes, solve

__all__ = [
    "LabeledInstance",
    "TrainConfig",
    "TrainHistory",
    "AdamState",
    "DistanceReport",
    "generate_labels",
    "split",
    "adam_update",
    "train",
    "evaluate_distance",
]


@dataclass(frozen=True)
class LabeledInstance:
    """An instance paired with a near-optimal primal-dual label."""

    instance: LpInstance
    x_star: np.ndarray
    y_star: np.ndarray
    label_tol: float

    def __post_init__(self):
        object.__setattr__(self, "x_star", np.ascontiguousarray(self.x_star, dtype=np.float64))
        object.__setattr__(self, "y_star", np.ascontiguousarray(self.y_star, dtype=np.float64))
        inst = self.instance
        if self.x_star.shape != (inst.num_vars,) or self.y_star.shape != (inst.num_cons,):
            raise UsageError("label dimensions do not match the instance")
        report = kkt_residuals(inst, self.x_star, self.y_star)
        if not report.max_residual <= self.label_tol:
            raise UsageError(
                f"label residual {report.max_residual:.3e} exceeds label_tol {self.label_tol:.3e}"
            )

    @property
    def label(self):
        return (self.x_star, self.y_star)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 200
    batch_size: int = 8
    split_ratio: float = 0.9
    seed: int = 0
    normalize_by_size: bool = False  # divide each instance loss by (n + m)
    # feature clamp for infinite bounds; families with O(1) data train far
    # better with a cap on the same scale, so it is part of the config and
    # gets persisted with the weights
    bound_cap: float = DEFAULT_BOUND_CAP

    def __post_init__(self):
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise UsageError("learning_rate and adam_eps must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise UsageError("Adam betas must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise UsageError("epochs and batch_size must be >= 1")
        if not 0.0 < self.split_ratio < 1.0:
            raise UsageError("split_ratio must lie in (0, 1)")
        if self.bound_cap <= 0:
            raise UsageError("bound_cap must be positive")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_distance: list = field(default_factory=list)
    best_epoch: int = -1


def generate_labels(instances, solver_cfg: SolverConfig | None = None) -> list[LabeledInstance]:
    """Solve each instance to the configured tolerance and attach the result.

    Instances whose solve does not reach optimal status are excluded with a
    warning; an empty result is an error.
    """
    solver_cfg = solver_cfg or SolverConfig(tol=1e-8)
    labeled = []
    skipped = []
    for inst in instances:
        res = solve(inst, solver_cfg)
        if res.status != STATUS_OPTIMAL:
            skipped.append(inst.name)
            continue
        labeled.append(
            LabeledInstance(instance=inst, x_star=res.x, y_star=res.y, label_tol=solver_cfg.tol)
        )
    if skipped:
        warnings.warn(f"excluded {len(skipped)} unconverged instances: {skipped[:5]}...", stacklevel=2)
    if not labeled:
        raise UsageError("no instance converged; empty labeled dataset")
    return labeled


def split(dataset, ratio: float, seed: int):
    """Seeded shuffle, then cut: ceil(ratio * N) training items, rest validation."""
    dataset = list(dataset)
    if len(dataset) < 2:
        raise UsageError("need at least 2 items to split")
    if not 0.0 < ratio < 1.0:
        raise UsageError("split ratio must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(dataset))
    cut = int(np.ceil(ratio * len(dataset)))
    train_set = [dataset[i] for i in order[:cut]]
    val_set = [dataset[i] for i in order[cut:]]
    return train_set, val_set


@dataclass
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, size: int):
        return cls(step=0, m=np.zeros(size), v=np.zeros(size))


def adam_update(theta: np.ndarray, grad: np.ndarray, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam step; returns (new_theta, new_state)."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise UsageError("parameter/gradient/state shapes differ")
    t = state.step + 1
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grad
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * (grad * grad)
    m_hat = m / (1.0 - cfg.adam_beta1**t)
    v_hat = v / (1.0 - cfg.adam_beta2**t)
    new_theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new_theta, AdamState(step=t, m=m, v=v)


def train(dataset, depth: int, widths, cfg: TrainConfig, validation=None):
    """Minimize the mean squared prediction error; returns (params, history).

    Without an explicit ``validation`` list the dataset is split internally
    at ``cfg.split_ratio``.  The parameters returned are those of the epoch
    with the smallest validation loss.
    """
    if validation is None:
        train_set, val_set = split(dataset, cfg.split_ratio, cfg.seed)
    else:
        train_set, val_set = list(dataset), list(validation)
    if not train_set or not val_set:
        raise UsageError("training and validation sets must be nonempty")

    tau0, sigma0 = default_step_sizes(train_set[0].instance)
    params = init_params(depth, widths, tau=tau0, sigma=sigma0, seed=cfg.seed)
    theta = flatten_params(params)
    state = AdamState.zeros(theta.size)
    history = TrainHistory()
    best_theta = theta.copy()
    best_val = np.inf

    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, epoch)))
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            grad = np.zeros_like(theta)
            batch_loss = 0.0
            params = unflatten_params(theta, params)
            for item in batch:
                X0, Y0 = build_inputs(item.instance, cfg.bound_cap)
                x_out, y_out, trace = forward(params, item.instance, X0, Y0, keep_trace=True)
                loss = instance_loss(x_out, y_out, item.label)
                g = flatten_params(backward(params, item.instance, trace, item.label))
                if cfg.normalize_by_size:
                    scale = item.instance.num_vars + item.instance.num_cons
                    loss /= scale
                    g /= scale
                batch_loss += loss
                grad += g
            grad /= len(batch)
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise NumericalFailureError(
                    f"training diverged at epoch {epoch} (loss={batch_loss}); lower the learning rate"
                )
            epoch_loss += batch_loss * len(batch)
            theta, state = adam_update(theta, grad, state, cfg)

        params = unflatten_params(theta, params)
        val_losses = np.array(
            [_instance_loss_of(params, item, cfg.normalize_by_size, cfg.bound_cap) for item in val_set]
        )
        val_loss = float(np.mean(val_losses))
        val_dist = float(np.mean(np.sqrt(val_losses)))
        history.train_loss.append(epoch_loss / len(train_set))
        history.val_loss.append(val_loss)
        history.val_distance.append(val_dist)
        if val_loss < best_val:
            best_val = val_loss
            best_theta = theta.copy()
            history.best_epoch = epoch

    return unflatten_params(best_theta, params), history


def _instance_loss_of(
    params: NetParams, item: LabeledInstance, normalize: bool, bound_cap: float = DEFAULT_BOUND_CAP
) -> float:
    X0, Y0 = build_inputs(item.instance, bound_cap)
    x_out, y_out, _ = forward(params, item.instance, X0, Y0)
    loss = instance_loss(x_out, y_out, item.label)
    if normalize:
        loss /= item.instance.num_vars + item.instance.num_cons
    return loss


@dataclass(frozen=True)
class DistanceReport:
    names: list
    primal: np.ndarray
    dual: np.ndarray
    total: np.ndarray

    @property
    def mean_primal(self) -> float:
        return float(np.mean(self.primal))

    @property
    def mean_dual(self) -> float:
        return float(np.mean(self.dual))

    @property
    def mean_total(self) -> float:
        return float(np.mean(self.total))


def evaluate_distance(params: NetParams, dataset, bound_cap: float = DEFAULT_BOUND_CAP) -> DistanceReport:
    """l2 distance between predictions and labels, split by primal/dual."""
    names, primal, dual, total = [], [], [], []
    for item in dataset:
        X0, Y0 = build_inputs(item.instance, bound_cap)
        x_out, y_out, _ = forward(params, item.instance, X0, Y0)
        dp = float(np.linalg.norm(x_out - item.x_star))
        dd = float(np.linalg.norm(y_out - item.y_star))
        names.append(item.instance.name)
        primal.append(dp)
        dual.append(dd)
        total.append(float(np.sqrt(dp * dp + dd * dd)))
    return DistanceReport(names, np.array(primal), np.array(dual), np.array(total))
