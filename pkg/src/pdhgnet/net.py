"""Unrolled-PDHG network: forward pass, exact recovery weights, backprop.

Each layer mirrors one PDHG iteration with the per-variable scalars expanded
into channel matrices so the trainable weights act only on the channel
dimension (and therefore transfer across instance sizes):

    X_{k+1} = ReLU( X_k Ux - tau_k * (c 1' - G' Y_k Uy) )
    Y_{k+1} = ReLU( Y_k Vy + sigma_k * (h 1' - 2 G X_{k+1} Wx + G X_k Vx) )

The primal stream starts from the 4 channels [x0, l, u, c] and the dual
stream from [y0, h]; a linear readout after the last ReLU collapses the
channels back to single vectors.

``construct_theta_pdhg`` builds the explicit weight assignment under which
the network reproduces restarted-free PDHG exactly: layer k's channels hold
the signed parts of the running average, the pre-projection iterate offsets
against the bounds, and the problem data, and fixed recombination matrices
(independent of the instance) recover the iterate and its running average at
every depth.  The readout picks out the running average, so the network
output equals the solver's averaged iterates.

``backward`` is plain reverse-mode differentiation of the squared prediction
error, written out by hand; ReLU uses subgradient 0 at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalFailureError, UsageError
from .model import LpInstance

__all__ = [
    "PrimalBlockParams",
    "DualBlockParams",
    "NetParams",
    "ForwardTrace",
    "MIN_EXACT_WIDTH",
    "build_inputs",
    "forward",
    "backward",
    "instance_loss",
    "construct_theta_pdhg",
    "theta_pdhg_extractors",
    "init_params",
    "flatten_params",
    "unflatten_params",
    "zeros_like_params",
]

PRIMAL_INPUT_WIDTH = 4
DUAL_INPUT_WIDTH = 2
#: minimum hidden width for the exact PDHG-recovery construction
MIN_EXACT_WIDTH = 10

DEFAULT_BOUND_CAP = 1e8


@dataclass
class PrimalBlockParams:
    tau: float
    U_x: np.ndarray  # (primal_in, width_out)
    U_y: np.ndarray  # (dual_in, width_out)


@dataclass
class DualBlockParams:
    sigma: float
    V_y: np.ndarray  # (dual_in, width_out)
    V_x: np.ndarray  # (primal_in, width_out)
    W_x: np.ndarray  # (width_out, width_out)


@dataclass
class NetParams:
    """Parameters of a K-layer network (one layer = primal block + dual block)."""

    hidden_widths: tuple
    primal: list
    dual: list
    readout_x: np.ndarray
    readout_y: np.ndarray

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        K = len(self.hidden_widths)
        if K < 1:
            raise UsageError("network depth must be >= 1")
        if len(self.primal) != K or len(self.dual) != K:
            raise UsageError("need one primal and one dual block per layer")
        if any(w < 1 for w in self.hidden_widths):
            raise UsageError("hidden widths must be >= 1")
        p = (self.primal[0].U_x.shape[0],) + self.hidden_widths
        q = (self.primal[0].U_y.shape[0],) + self.hidden_widths
        for k, (pb, db) in enumerate(zip(self.primal, self.dual)):
            d_next = self.hidden_widths[k]
            expect = {
                "U_x": (pb.U_x, (p[k], d_next)),
                "U_y": (pb.U_y, (q[k], d_next)),
                "V_y": (db.V_y, (q[k], d_next)),
                "V_x": (db.V_x, (p[k], d_next)),
                "W_x": (db.W_x, (d_next, d_next)),
            }
            for name, (arr, shape) in expect.items():
                if arr.shape != shape:
                    raise UsageError(f"layer {k}: {name} must have shape {shape}, got {arr.shape}")
        d_K = self.hidden_widths[-1]
        if self.readout_x.shape != (d_K,) or self.readout_y.shape != (d_K,):
            raise UsageError(f"readout vectors must have shape ({d_K},)")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def primal_input_width(self) -> int:
        return self.primal[0].U_x.shape[0]

    @property
    def dual_input_width(self) -> int:
        return self.primal[0].U_y.shape[0]


@dataclass
class ForwardTrace:
    """Per-layer activations and matvec intermediates kept for backprop."""

    X: list  # X^0 .. X^K, shapes (n, p_k)
    Y: list  # Y^0 .. Y^K, shapes (m, q_k)
    pre_X: list  # primal pre-activations A^0 .. A^{K-1}
    pre_Y: list  # dual pre-activations B^0 .. B^{K-1}
    GtY: list  # G' Y^k per layer
    GX: list  # G X^k for k = 0 .. K
    T: list  # G'Y^k Uy - c 1' per layer
    S: list  # h 1' - 2 G X^{k+1} Wx + G X^k Vx per layer
    x_out: np.ndarray
    y_out: np.ndarray


def build_inputs(inst: LpInstance, bound_cap: float = DEFAULT_BOUND_CAP):
    """Initial channel matrices: X0 = [x0, l, u, c], Y0 = [y0, h], x0 = y0 = 0.

    Infinite bounds enter the features clamped to +-bound_cap; the instance
    handed to the solver keeps its true infinities.
    """
    if bound_cap <= 0:
        raise UsageError("bound_cap must be positive")
    n, m = inst.num_vars, inst.num_cons
    X0 = np.empty((n, PRIMAL_INPUT_WIDTH))
    X0[:, 0] = 0.0
    X0[:, 1] = np.maximum(inst.l, -bound_cap)
    X0[:, 2] = np.minimum(inst.u, bound_cap)
    X0[:, 3] = inst.c
    Y0 = np.empty((m, DUAL_INPUT_WIDTH))
    Y0[:, 0] = 0.0
    Y0[:, 1] = inst.h
    return X0, Y0


def forward(params: NetParams, inst: LpInstance, X0, Y0, keep_trace: bool = False):
    """Run the unrolled layers; returns (x_out, y_out, trace-or-None).

    Outputs are the raw linear readouts (no activation); the warm-start
    pipeline projects them onto the feasible boxes afterwards.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    Y0 = np.asarray(Y0, dtype=np.float64)
    n, m = inst.num_vars, inst.num_cons
    if X0.shape != (n, params.primal_input_width):
        raise UsageError(f"X0 must have shape ({n}, {params.primal_input_width}), got {X0.shape}")
    if Y0.shape != (m, params.dual_input_width):
        raise UsageError(f"Y0 must have shape ({m}, {params.dual_input_width}), got {Y0.shape}")

    G, c, h = inst.G, inst.c, inst.h
    X, Y = X0, Y0
    Xs, Ys = [X0], [Y0]
    pre_X, pre_Y, GtYs, GXs, Ts, Ss = [], [], [], [], [], []
    gx_cur = G.matmat(X)

    for k in range(params.depth):
        pb, db = params.primal[k], params.dual[k]
        gty = G.rmatmat(Y)
        T = gty @ pb.U_y - c[:, None]
        A = X @ pb.U_x + pb.tau * T
        X_next = np.maximum(A, 0.0)
        gx_next = G.matmat(X_next)
        S = h[:, None] - 2.0 * (gx_next @ db.W_x) + gx_cur @ db.V_x
        B = Y @ db.V_y + db.sigma * S
        Y_next = np.maximum(B, 0.0)
        if not (np.all(np.isfinite(X_next)) and np.all(np.isfinite(Y_next))):
            raise NumericalFailureError(f"non-finite activation at layer {k}")
        if keep_trace:
            pre_X.append(A)
            pre_Y.append(B)
            GtYs.append(gty)
            GXs.append(gx_cur)
            Ts.append(T)
            Ss.append(S)
            Xs.append(X_next)
            Ys.append(Y_next)
        X, Y, gx_cur = X_next, Y_next, gx_next

    x_out = X @ params.readout_x
    y_out = Y @ params.readout_y
    trace = None
    if keep_trace:
        GXs.append(gx_cur)
        trace = ForwardTrace(Xs, Ys, pre_X, pre_Y, GtYs, GXs, Ts, Ss, x_out, y_out)
    return x_out, y_out, trace


def instance_loss(x_out, y_out, label) -> float:
    """Squared l2 prediction error against the label pair (x*, y*)."""
    x_star, y_star = (np.asarray(v, dtype=np.float64) for v in label)
    x_out = np.asarray(x_out, dtype=np.float64)
    y_out = np.asarray(y_out, dtype=np.float64)
    if x_out.shape != x_star.shape or y_out.shape != y_star.shape:
        raise UsageError("prediction/label shapes differ")
    dx = x_out - x_star
    dy = y_out - y_star
    return float(dx @ dx + dy @ dy)


def backward(params: NetParams, inst: LpInstance, trace: ForwardTrace, label) -> NetParams:
    """Exact gradients of instance_loss w.r.t. every parameter.

    Requires the trace from ``forward(..., keep_trace=True)`` on the same
    parameters and instance.  Returns a parameter-shaped container.
    """
    if trace is None:
        raise UsageError("backward needs the trace recorded by forward(keep_trace=True)")
    if len(trace.pre_X) != params.depth:
        raise UsageError("trace depth does not match the parameters")
    x_star, y_star = label
    G = inst.G
    K = params.depth

    g_x_out = 2.0 * (trace.x_out - np.asarray(x_star, dtype=np.float64))
    g_y_out = 2.0 * (trace.y_out - np.asarray(y_star, dtype=np.float64))
    d_readout_x = trace.X[K].T @ g_x_out
    d_readout_y = trace.Y[K].T @ g_y_out
    dX = np.outer(g_x_out, params.readout_x)
    dY = np.outer(g_y_out, params.readout_y)

    grads_primal = [None] * K
    grads_dual = [None] * K
    for k in range(K - 1, -1, -1):
        pb, db = params.primal[k], params.dual[k]
        X_k, Y_k = trace.X[k], trace.Y[k]
        X_next = trace.X[k + 1]
        gx_next, gx_cur = trace.GX[k + 1], trace.GX[k]

        # dual block: Y_{k+1} = relu(Y_k Vy + sigma * S)
        dB = dY * (trace.pre_Y[k] > 0)
        d_Vy = Y_k.T @ dB
        d_sigma = float(np.sum(dB * trace.S[k]))
        dY_prev = dB @ db.V_y.T
        dS = db.sigma * dB
        d_Wx = -2.0 * (gx_next.T @ dS)
        d_Vx = gx_cur.T @ dS
        dX_next = dX + G.rmatmat(-2.0 * (dS @ db.W_x.T))
        dX_cur_from_dual = G.rmatmat(dS @ db.V_x.T)

        # primal block: X_{k+1} = relu(X_k Ux + tau * T)
        dA = dX_next * (trace.pre_X[k] > 0)
        d_Ux = X_k.T @ dA
        d_tau = float(np.sum(dA * trace.T[k]))
        dT = pb.tau * dA
        d_Uy = trace.GtY[k].T @ dT
        dY_prev = dY_prev + G.matmat(dT @ pb.U_y.T)
        dX_prev = dX_cur_from_dual + dA @ pb.U_x.T

        grads_primal[k] = PrimalBlockParams(tau=d_tau, U_x=d_Ux, U_y=d_Uy)
        grads_dual[k] = DualBlockParams(sigma=d_sigma, V_y=d_Vy, V_x=d_Vx, W_x=d_Wx)
        dX, dY = dX_prev, dY_prev

    return NetParams(
        hidden_widths=params.hidden_widths,
        primal=grads_primal,
        dual=grads_dual,
        readout_x=d_readout_x,
        readout_y=d_readout_y,
    )


# ---------------------------------------------------------------------------
# Exact PDHG recovery assignment
# ---------------------------------------------------------------------------
#
# The construction tracks five named primal quantities [xbar, x, l, u, c] and
# three dual ones [ybar, y, h].  Per layer, an extraction matrix E maps the
# live channels onto those quantities; the block weights are E composed with
# fixed channel recipes so that after the ReLU the channels hold
#
#   primal: [(xbar)+, (xbar)-, (xt-l)+, (xt-u)+, l+, l-, u+, u-, c+, c-, 0...]
#   dual:   [(ybar)+, (ybar)-, y_next, h+, h-, 0...]
#
# where xt is the pre-projection primal step.  Signed parts recombine to the
# plain quantities (z = z+ - z-), the box projection is l + (xt-l)+ - (xt-u)+,
# and the running average advances by the k/(k+1) recurrence, which is what
# the layer-dependent entries of the extraction express.


def _extract_primal(k: int, width: int) -> np.ndarray:
    """E with X^k E = [xbar^k, x^k, l, u, c]; depends on k only via k/(k+1)."""
    if k == 0:
        return np.array(
            [
                [1.0, 1.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, 1.0],
            ]
        )
    j = k - 1
    a = j / (j + 1.0)
    b = 1.0 / (j + 1.0)
    top = np.array(
        [
            [a, 0.0, 0.0, 0.0, 0.0],
            [-a, 0.0, 0.0, 0.0, 0.0],
            [b, 1.0, 0.0, 0.0, 0.0],
            [-b, -1.0, 0.0, 0.0, 0.0],
            [b, 1.0, 1.0, 0.0, 0.0],
            [-b, -1.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0, -1.0],
        ]
    )
    E = np.zeros((width, 5))
    E[:10] = top
    return E


def _extract_dual(k: int, width: int) -> np.ndarray:
    """E with Y^k E = [ybar^k, y^k, h]."""
    if k == 0:
        return np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    j = k - 1
    a = j / (j + 1.0)
    b = 1.0 / (j + 1.0)
    top = np.array(
        [
            [a, 0.0, 0.0],
            [-a, 0.0, 0.0],
            [b, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]
    )
    E = np.zeros((width, 3))
    E[:5] = top
    return E


def _primal_recipe(tau: float, width_out: int) -> np.ndarray:
    """Rows [xbar, x, l, u, c] -> pre-ReLU primal channel targets (before -tau*c1')."""
    C = np.zeros((5, width_out))
    C[0, 0], C[0, 1] = 1.0, -1.0  # +-xbar
    C[1, 2], C[1, 3] = 1.0, 1.0  # x into the two bound offsets
    C[2, 2], C[2, 4], C[2, 5] = -1.0, 1.0, -1.0  # l
    C[3, 3], C[3, 6], C[3, 7] = -1.0, 1.0, -1.0  # u
    C[4, :] = tau  # every channel carries tau*c, cancelled by the -tau*c1' term
    C[4, 8], C[4, 9] = tau + 1.0, tau - 1.0  # +-c survive the cancellation
    C[4, 2], C[4, 3] = 0.0, 0.0  # bound offsets absorb G'y instead
    return C


def _primal_coupling(width_out: int) -> np.ndarray:
    """Rows [ybar, y, h] -> channels of Y Uy: y lands where G'y must appear."""
    C = np.zeros((3, width_out))
    C[1, 2], C[1, 3] = 1.0, 1.0
    return C


def _dual_recipe(sigma: float, width_out: int) -> np.ndarray:
    """Rows [ybar, y, h] -> pre-ReLU dual channel targets (before +sigma*h1')."""
    C = np.zeros((3, width_out))
    C[0, 0], C[0, 1] = 1.0, -1.0  # +-ybar
    C[1, 2] = 1.0  # y hosts the dual step
    C[2, :] = -sigma  # cancelled by the +sigma*h1' term
    C[2, 2] = 0.0  # the dual-step channel gets its h from the sigma*h1' term
    C[2, 3], C[2, 4] = 1.0 - sigma, -(1.0 + sigma)  # +-h survive
    return C


def _dual_coupling(width_out: int) -> np.ndarray:
    """Rows [xbar, x, l, u, c] -> channels of X Wx / X Vx: x feeds the dual step."""
    C = np.zeros((5, width_out))
    C[1, 2] = 1.0
    return C


def _normalize_widths(depth: int, widths) -> tuple:
    if np.isscalar(widths):
        widths = (int(widths),) * depth
    widths = tuple(int(w) for w in widths)
    if len(widths) != depth:
        raise UsageError(f"need {depth} hidden widths, got {len(widths)}")
    return widths


def theta_pdhg_extractors(depth: int, widths):
    """Per-layer channel-recovery matrices for the exact assignment.

    Returns (primal, dual) lists indexed by layer 0..depth; column 0 recovers
    the running average, column 1 the plain iterate.  The matrices depend
    only on depth and widths, never on the instance.
    """
    widths = _normalize_widths(depth, widths)
    p_chain = (PRIMAL_INPUT_WIDTH,) + widths
    q_chain = (DUAL_INPUT_WIDTH,) + widths
    Ex = [_extract_primal(k, p_chain[k]) for k in range(depth + 1)]
    Ey = [_extract_dual(k, q_chain[k]) for k in range(depth + 1)]
    return Ex, Ey


def construct_theta_pdhg(depth: int, widths, tau: float, sigma: float) -> NetParams:
    """Weights under which the network reproduces PDHG's averaged iterates.

    Every hidden width must be at least ``MIN_EXACT_WIDTH`` (the construction
    stores ten signed primal channels).  The readout recovers the running
    average, so forward() equals the solver's (xbar^K, ybar^K) on any
    instance with finite bounds inside the feature cap.
    """
    if depth < 1:
        raise UsageError("depth must be >= 1")
    widths = _normalize_widths(depth, widths)
    if any(w < MIN_EXACT_WIDTH for w in widths):
        raise UsageError(
            f"exact recovery needs hidden widths >= {MIN_EXACT_WIDTH}, got {widths}"
        )
    Ex, Ey = theta_pdhg_extractors(depth, widths)
    primal, dual = [], []
    for k in range(depth):
        d_next = widths[k]
        primal.append(
            PrimalBlockParams(
                tau=tau,
                U_x=Ex[k] @ _primal_recipe(tau, d_next),
                U_y=Ey[k] @ _primal_coupling(d_next),
            )
        )
        dual.append(
            DualBlockParams(
                sigma=sigma,
                V_y=Ey[k] @ _dual_recipe(sigma, d_next),
                V_x=Ex[k] @ _dual_coupling(d_next),
                W_x=Ex[k + 1] @ _dual_coupling(d_next),
            )
        )
    return NetParams(
        hidden_widths=widths,
        primal=primal,
        dual=dual,
        readout_x=Ex[depth][:, 0].copy(),
        readout_y=Ey[depth][:, 0].copy(),
    )


# ---------------------------------------------------------------------------
# Trainable initialization and parameter flattening
# ---------------------------------------------------------------------------


def init_params(depth: int, widths, tau: float, sigma: float, seed: int = 0) -> NetParams:
    """Seeded uniform init scaled by 1/sqrt(fan_in); step scalars as given."""
    widths = _normalize_widths(depth, widths)
    rng = np.random.default_rng(seed)
    p_chain = (PRIMAL_INPUT_WIDTH,) + widths
    q_chain = (DUAL_INPUT_WIDTH,) + widths

    def mat(fan_in, fan_out):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, (fan_in, fan_out))

    primal, dual = [], []
    for k in range(depth):
        d_next = widths[k]
        primal.append(PrimalBlockParams(tau=tau, U_x=mat(p_chain[k], d_next), U_y=mat(q_chain[k], d_next)))
        dual.append(
            DualBlockParams(
                sigma=sigma,
                V_y=mat(q_chain[k], d_next),
                V_x=mat(p_chain[k], d_next),
                W_x=mat(d_next, d_next),
            )
        )
    d_K = widths[-1]
    s = 1.0 / np.sqrt(d_K)
    return NetParams(
        hidden_widths=widths,
        primal=primal,
        dual=dual,
        readout_x=rng.uniform(-s, s, d_K),
        readout_y=rng.uniform(-s, s, d_K),
    )


def _param_arrays(params: NetParams):
    for pb, db in zip(params.primal, params.dual):
        yield pb.U_x
        yield pb.U_y
        yield db.V_y
        yield db.V_x
        yield db.W_x
    yield params.readout_x
    yield params.readout_y


def flatten_params(params: NetParams) -> np.ndarray:
    """Pack all parameters (step scalars first, then matrices) into one vector."""
    scalars = []
    for pb, db in zip(params.primal, params.dual):
        scalars.extend([pb.tau, db.sigma])
    return np.concatenate([np.array(scalars)] + [a.ravel() for a in _param_arrays(params)])


def unflatten_params(vec: np.ndarray, like: NetParams) -> NetParams:
    """Inverse of flatten_params for a vector with the same layout as ``like``."""
    vec = np.asarray(vec, dtype=np.float64)
    K = like.depth
    expected = 2 * K + sum(a.size for a in _param_arrays(like))
    if vec.shape != (expected,):
        raise UsageError(f"vector length {vec.size} does not match parameter count {expected}")
    pos = 2 * K
    scalars = vec[:pos]

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = vec[pos : pos + size].reshape(shape)
        pos += size
        return out.copy()

    primal, dual = [], []
    for k in range(K):
        pb, db = like.primal[k], like.dual[k]
        primal.append(
            PrimalBlockParams(tau=float(scalars[2 * k]), U_x=take(pb.U_x.shape), U_y=take(pb.U_y.shape))
        )
        dual.append(
            DualBlockParams(
                sigma=float(scalars[2 * k + 1]),
                V_y=take(db.V_y.shape),
                V_x=take(db.V_x.shape),
                W_x=take(db.W_x.shape),
            )
        )
    readout_x = take(like.readout_x.shape)
    readout_y = take(like.readout_y.shape)
    return NetParams(
        hidden_widths=like.hidden_widths,
        primal=primal,
        dual=dual,
        readout_x=readout_x,
        readout_y=readout_y,
    )


def zeros_like_params(params: NetParams) -> NetParams:
    return unflatten_params(np.zeros(flatten_params(params).size), params)
