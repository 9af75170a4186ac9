"""Deterministic LP instance generators.

Three families:

* ``gen_pagerank`` -- the damped-PageRank LP on a preferential-attachment
  graph.  With the default attachment count of 3 the instance has exactly
  ``n`` variables, ``n + 1`` constraints and ``8n - 18`` nonzeros, and its
  optimal objective value is exactly 1.
* ``gen_perturbed_family`` -- multiplicative perturbations of a base
  instance's cost/rhs data, used as a training corpus of similar problems.
* ``gen_random_solvable`` -- random LPs built backwards from a chosen
  primal-dual pair so the optimum is known exactly (complementary slackness
  and a vanishing reduced cost hold by construction).

All generators are pure functions of their seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .linalg import SparseMatrix
from .model import LpInstance

__all__ = [
    "PageRankSpec",
    "PerturbSpec",
    "gen_pagerank",
    "gen_perturbed_family",
    "gen_random_solvable",
    "pagerank_vector",
]


@dataclass(frozen=True)
class PageRankSpec:
    nodes: int
    attach: int = 3
    damping: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if self.attach < 1:
            raise UsageError("attach must be >= 1")
        if self.nodes <= self.attach:
            raise UsageError(f"need more than {self.attach} nodes")
        if not 0.0 < self.damping < 1.0:
            raise UsageError("damping must lie in (0, 1)")


@dataclass(frozen=True)
class PerturbSpec:
    base: LpInstance
    count: int
    amplitude: float
    targets: tuple = ("h", "c")
    seed: int = 0

    def __post_init__(self):
        if self.count < 0:
            raise UsageError("count must be nonnegative")
        if self.amplitude < 0:
            raise UsageError("amplitude must be nonnegative")
        targets = tuple(self.targets)
        if not set(targets) <= {"h", "c"}:
            raise UsageError("perturbation targets must be a subset of {'h', 'c'}")
        object.__setattr__(self, "targets", targets)


def _attachment_edges(n: int, m_a: int, rng: np.random.Generator):
    """Preferential-attachment edge list over nodes 0..n-1.

    Nodes 0..m_a-1 seed the graph; the first m_a arrivals attach to the whole
    seed set (this warm-up pins every seed's degree at m_a), after which each
    arrival picks m_a distinct targets with probability proportional to
    degree.  Every arrival contributes exactly m_a edges, so the total count
    is m_a * (n - m_a).
    """
    edges = []
    repeated = []  # one entry per endpoint per edge: sampling from it is degree-proportional
    for new in range(m_a, n):
        if new < 2 * m_a:
            targets = list(range(m_a))
        else:
            targets = []
            seen = set()
            while len(targets) < m_a:
                t = repeated[rng.integers(0, len(repeated))]
                if t not in seen:
                    seen.add(t)
                    targets.append(t)
        for t in targets:
            edges.append((new, t))
            repeated.append(t)
        repeated.extend([new] * m_a)
    return edges


def gen_pagerank(spec: PageRankSpec) -> LpInstance:
    """Damped-PageRank LP: min 1'x  s.t. (I - damping*S) x >= 0, 1'x >= 1, x >= 0.

    ``S`` is the column-stochastic arc matrix of the attachment graph with
    every edge oriented both ways.  The scaled PageRank vector is feasible
    with objective exactly 1, and the mass row forces 1'x >= 1, so the optimal
    value is 1.
    """
    n, m_a = spec.nodes, spec.attach
    rng = np.random.default_rng(spec.seed)
    edges = _attachment_edges(n, m_a, rng)

    degree = np.zeros(n, dtype=np.int64)
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1

    # row i of (I - damping*S): 1 on the diagonal, -damping/degree(j) per neighbor j
    arc_count = 2 * len(edges)
    row_idx = np.empty(n + arc_count, dtype=np.int64)
    col_idx = np.empty(n + arc_count, dtype=np.int64)
    vals = np.empty(n + arc_count)
    row_idx[:n] = np.arange(n)
    col_idx[:n] = np.arange(n)
    vals[:n] = 1.0
    pos = n
    for a, b in edges:
        row_idx[pos], col_idx[pos], vals[pos] = a, b, -spec.damping / degree[b]
        row_idx[pos + 1], col_idx[pos + 1], vals[pos + 1] = b, a, -spec.damping / degree[a]
        pos += 2

    # final mass row: 1'x >= 1
    mass_row = np.full(n, n, dtype=np.int64)
    G = SparseMatrix.from_coo(
        n + 1,
        n,
        np.concatenate([row_idx, mass_row]),
        np.concatenate([col_idx, np.arange(n)]),
        np.concatenate([vals, np.ones(n)]),
    )
    h = np.zeros(n + 1)
    h[n] = 1.0
    return LpInstance(
        G=G,
        c=np.ones(n),
        h=h,
        l=np.zeros(n),
        u=np.full(n, np.inf),
        name=f"pagerank-n{n}-s{spec.seed}",
    )


def pagerank_vector(inst: LpInstance, damping: float = 0.85, tol: float = 1e-14, max_iter: int = 10_000) -> np.ndarray:
    """Power iteration for the scaled PageRank vector of a generated instance.

    Solves x = damping*S x + (1-damping)/n * 1 on the graph encoded in the
    instance's first n rows; the result sums to 1 and is feasible for the LP.
    Used as an independent oracle in tests.
    """
    n = inst.num_vars
    # recover damping*S from the off-diagonal entries of the first n rows
    G = inst.G
    lam_s_rows, lam_s_cols, lam_s_vals = [], [], []
    for i in range(n):
        lo, hi = G.row_offsets[i], G.row_offsets[i + 1]
        cols = G.col_indices[lo:hi]
        v = G.values[lo:hi]
        off = cols != i
        lam_s_rows.append(np.full(int(off.sum()), i, dtype=np.int64))
        lam_s_cols.append(cols[off])
        lam_s_vals.append(-v[off])
    lamS = SparseMatrix.from_coo(
        n, n, np.concatenate(lam_s_rows), np.concatenate(lam_s_cols), np.concatenate(lam_s_vals)
    )
    x = np.full(n, 1.0 / n)
    teleport = (1.0 - damping) / n
    for _ in range(max_iter):
        x_new = lamS.matvec(x) + teleport
        if np.max(np.abs(x_new - x)) <= tol:
            return x_new
        x = x_new
    return x


def gen_perturbed_family(spec: PerturbSpec) -> list[LpInstance]:
    """Copies of the base instance with selected data multiplied by 1 + noise.

    Noise is uniform in [-amplitude, amplitude], drawn from a per-instance
    seed, so any prefix of the family is stable when the count grows.  The
    sparsity pattern and bounds are untouched.
    """
    out = []
    for i in range(spec.count):
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, i)))
        h = spec.base.h.copy()
        c = spec.base.c.copy()
        if "h" in spec.targets:
            h = h * (1.0 + rng.uniform(-spec.amplitude, spec.amplitude, h.size))
        if "c" in spec.targets:
            c = c * (1.0 + rng.uniform(-spec.amplitude, spec.amplitude, c.size))
        out.append(
            LpInstance(
                G=spec.base.G,
                c=c,
                h=h,
                l=spec.base.l,
                u=spec.base.u,
                name=f"{spec.base.name}-perturb{i}",
            )
        )
    return out


def gen_random_solvable(n: int, m: int, density: float = 0.5, seed: int = 0):
    """Random LP with a constructed optimum; returns (instance, x_star, y_star).

    The pair is a KKT point by construction: x_star lies strictly inside
    finite bounds, c = G.T y_star makes the reduced cost vanish, and the slack
    h = G x_star - s is zero exactly on the rows where y_star > 0.
    """
    if n < 1 or m < 1:
        raise UsageError("need n, m >= 1")
    if not 0.0 < density <= 1.0:
        raise UsageError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    for _ in range(50):
        keep = rng.random((m, n)) < density
        keep[np.arange(m), rng.integers(0, n, m)] = True  # no empty rows
        vals = rng.uniform(-1.0, 1.0, keep.sum())
        r, ccol = np.nonzero(keep)
        G = SparseMatrix.from_coo(m, n, r, ccol, vals)
        if np.any(np.all(~keep, axis=0)):  # empty column: resample
            continue

        l = rng.uniform(-2.0, 0.0, n)
        u = l + rng.uniform(1.0, 3.0, n)
        x_star = l + (u - l) * rng.uniform(0.25, 0.75, n)

        active = rng.random(m) < 0.5
        if not active.any():
            active[rng.integers(0, m)] = True
        y_star = np.where(active, rng.uniform(0.5, 1.5, m), 0.0)

        slack = np.where(active, 0.0, rng.uniform(0.1, 1.0, m))
        h = G.matvec(x_star) - slack
        c = G.rmatvec(y_star)
        if not np.any(c):  # all-zero objective is degenerate; resample
            continue
        inst = LpInstance(G=G, c=c, h=h, l=l, u=u, name=f"solvable-n{n}-m{m}-s{seed}")
        return inst, x_star, y_star
    raise UsageError("could not sample a non-degenerate instance")
