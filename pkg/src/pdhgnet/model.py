"""Standard-form LP representation and the measures the solver terminates on.

The standard form is

    minimize    c'x
    subject to  G x >= h,   l <= x <= u,

with ``l``/``u`` allowed to be -inf/+inf componentwise.  ``canonicalize``
turns general constraint senses (<=, =, >=) into this form.

The KKT residuals implemented here mirror common first-order LP solver
practice: relative primal feasibility, relative dual feasibility measured on
the reduced cost against the bound structure, and a relative objective gap.
All three are scaled by ``1/(1 + norm(data))`` so zero-data instances stay
well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .linalg import SparseMatrix

__all__ = [
    "LpInstance",
    "GeneralLp",
    "KktReport",
    "SENSE_LE",
    "SENSE_EQ",
    "SENSE_GE",
    "canonicalize",
    "lagrangian",
    "pd_gap",
    "kkt_residuals",
    "project_box",
    "project_nonneg",
]

SENSE_LE = "LE"
SENSE_EQ = "EQ"
SENSE_GE = "GE"


def _vec(v, length, name, allow_inf=False):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (length,):
        raise UsageError(f"{name} must have shape ({length},), got {v.shape}")
    if np.any(np.isnan(v)):
        raise UsageError(f"{name} contains NaN")
    if not allow_inf and not np.all(np.isfinite(v)):
        raise UsageError(f"{name} must be finite")
    return v


@dataclass(frozen=True)
class LpInstance:
    """An LP in standard form: min c'x s.t. Gx >= h, l <= x <= u."""

    G: SparseMatrix
    c: np.ndarray
    h: np.ndarray
    l: np.ndarray
    u: np.ndarray
    name: str = "unnamed"

    def __post_init__(self):
        m, n = self.G.rows, self.G.cols
        object.__setattr__(self, "c", _vec(self.c, n, "c"))
        object.__setattr__(self, "h", _vec(self.h, m, "h"))
        object.__setattr__(self, "l", _vec(self.l, n, "l", allow_inf=True))
        object.__setattr__(self, "u", _vec(self.u, n, "u", allow_inf=True))
        if np.any(self.l > self.u):
            raise UsageError("lower bounds must not exceed upper bounds")
        for arr in (self.c, self.h, self.l, self.u):
            arr.setflags(write=False)

    @property
    def num_vars(self) -> int:
        return self.G.cols

    @property
    def num_cons(self) -> int:
        return self.G.rows

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class GeneralLp:
    """An LP with per-row senses, as read from external formats."""

    A: SparseMatrix
    senses: tuple
    rhs: np.ndarray
    c: np.ndarray
    l: np.ndarray
    u: np.ndarray
    name: str = "unnamed"

    def __post_init__(self):
        m, n = self.A.rows, self.A.cols
        senses = tuple(self.senses)
        if len(senses) != m:
            raise UsageError(f"senses must have length {m}, got {len(senses)}")
        bad = {s for s in senses} - {SENSE_LE, SENSE_EQ, SENSE_GE}
        if bad:
            raise UsageError(f"unknown constraint senses: {sorted(bad)}")
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "rhs", _vec(self.rhs, m, "rhs"))
        object.__setattr__(self, "c", _vec(self.c, n, "c"))
        object.__setattr__(self, "l", _vec(self.l, n, "l", allow_inf=True))
        object.__setattr__(self, "u", _vec(self.u, n, "u", allow_inf=True))
        if np.any(self.l > self.u):
            raise UsageError("lower bounds must not exceed upper bounds")


@dataclass(frozen=True)
class KktReport:
    """Relative optimality measures at a primal-dual point."""

    primal_residual: float
    dual_residual: float
    rel_gap: float
    objective: float

    @property
    def max_residual(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.rel_gap)

    def within(self, tol: float) -> bool:
        return self.max_residual <= tol


def canonicalize(g: GeneralLp) -> LpInstance:
    """Rewrite general senses into the all->= standard form.

    LE rows are negated, EQ rows are split into a (row, -row) pair of >=
    constraints, GE rows are copied verbatim.  Bounds and objective are
    untouched.
    """
    A = g.A
    row_idx, col_idx, vals, rhs_out = [], [], [], []
    out_row = 0
    for i, sense in enumerate(g.senses):
        lo, hi = A.row_offsets[i], A.row_offsets[i + 1]
        cols_i = A.col_indices[lo:hi]
        vals_i = A.values[lo:hi]
        if sense == SENSE_GE:
            variants = [(1.0, g.rhs[i])]
        elif sense == SENSE_LE:
            variants = [(-1.0, -g.rhs[i])]
        else:  # EQ -> a >= pair enclosing the equality
            variants = [(1.0, g.rhs[i]), (-1.0, -g.rhs[i])]
        for scale, b in variants:
            row_idx.append(np.full(cols_i.size, out_row, dtype=np.int64))
            col_idx.append(cols_i)
            vals.append(scale * vals_i)
            rhs_out.append(b)
            out_row += 1
    if row_idx:
        G = SparseMatrix.from_coo(
            out_row,
            A.cols,
            np.concatenate(row_idx),
            np.concatenate(col_idx),
            np.concatenate(vals),
        )
    else:
        G = SparseMatrix(0, A.cols, np.zeros(1, dtype=np.int64), [], [])
    return LpInstance(G=G, c=g.c, h=np.array(rhs_out), l=g.l, u=g.u, name=g.name)


def lagrangian(inst: LpInstance, x, y) -> float:
    """c'x - y'Gx + h'y."""
    x = _vec(x, inst.num_vars, "x")
    y = _vec(y, inst.num_cons, "y")
    return float(inst.c @ x - y @ inst.G.matvec(x) + inst.h @ y)


def pd_gap(inst: LpInstance, candidate_x, candidate_y, ref_x, ref_y) -> float:
    """L(candidate_x, ref_y) - L(ref_x, candidate_y) for a feasible reference.

    At a saddle point the value is zero; positivity against an optimal
    reference measures how far the candidate pair is from optimality.
    """
    ref_x = _vec(ref_x, inst.num_vars, "ref_x")
    ref_y = _vec(ref_y, inst.num_cons, "ref_y")
    if np.any(ref_y < 0) or np.any(ref_x < inst.l) or np.any(ref_x > inst.u):
        raise UsageError("reference point must satisfy l <= x <= u and y >= 0")
    return lagrangian(inst, candidate_x, ref_y) - lagrangian(inst, ref_x, candidate_y)


def _absorbable(r, l, u):
    """Part of the reduced cost the finite bounds can absorb.

    A positive component needs a finite lower bound to act against, a negative
    one a finite upper bound; anything else is a dual-feasibility violation.
    """
    pos = np.where(np.isfinite(l), np.maximum(r, 0.0), 0.0)
    neg = np.where(np.isfinite(u), np.minimum(r, 0.0), 0.0)
    return pos + neg


def kkt_residuals(inst: LpInstance, x, y, gx=None, gty=None) -> KktReport:
    """Relative KKT measures at (x, y).

    ``gx``/``gty`` may supply precomputed G@x and G.T@y (the solver reuses the
    matvecs it already performed).  Bound terms of the dual objective use only
    the absorbable part of the reduced cost so the report stays finite; the
    discarded part is exactly what ``dual_residual`` charges for.
    """
    x = _vec(x, inst.num_vars, "x")
    y = _vec(y, inst.num_cons, "y")
    gx = inst.G.matvec(x) if gx is None else gx
    gty = inst.G.rmatvec(y) if gty is None else gty

    primal = np.linalg.norm(np.maximum(inst.h - gx, 0.0)) / (1.0 + np.linalg.norm(inst.h))

    r = inst.c - gty
    absorbed = _absorbable(r, inst.l, inst.u)
    dual = np.linalg.norm(r - absorbed) / (1.0 + np.linalg.norm(inst.c))

    obj = float(inst.c @ x)
    # +-inf * 0 -> 0 by construction: absorbed is zero wherever the bound is infinite
    bound_terms = np.where(absorbed > 0, inst.l, np.where(absorbed < 0, inst.u, 0.0))
    dual_obj = float(inst.h @ y + bound_terms @ absorbed)
    gap = abs(obj - dual_obj) / (1.0 + abs(obj) + abs(dual_obj))

    return KktReport(float(primal), float(dual), float(gap), obj)


def project_box(z, l, u) -> np.ndarray:
    """Componentwise median(l, z, u); infinite bounds pass values through."""
    z = np.asarray(z, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any(l > u):
        raise UsageError("project_box needs l <= u")
    return np.minimum(np.maximum(z, l), u)


def project_nonneg(z) -> np.ndarray:
    return np.maximum(np.asarray(z, dtype=np.float64), 0.0)
