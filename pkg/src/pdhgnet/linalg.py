"""Sparse CSR kernels and spectral-norm estimation.

Everything here operates on immutable inputs and returns fresh arrays, so the
functions are safe to call concurrently on shared matrices.  Multi-channel
products are defined column-by-column in terms of the single-vector kernels,
which makes them bit-identical to the equivalent sequence of matvec calls.

Summation inside the kernels is sequential over the stored entries (numpy's
``bincount`` accumulates left to right), so repeated calls are deterministic
down to the bit.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import NumericalFailureError, UsageError

__all__ = ["SparseMatrix", "estimate_spectral_norm"]


class SparseMatrix:
    """Immutable CSR matrix with sorted, duplicate-free columns per row.

    Parameters
    ----------
    rows, cols : int
        Matrix dimensions.
    row_offsets : array of int, shape (rows + 1,)
        Nondecreasing; ``row_offsets[-1]`` equals the number of stored entries.
    col_indices : array of int, shape (nnz,)
        Strictly increasing within each row.
    values : array of float, shape (nnz,)
        Finite entries (explicit zeros are allowed).
    """

    __slots__ = ("rows", "cols", "row_offsets", "col_indices", "values", "_entry_rows")

    def __init__(self, rows, cols, row_offsets, col_indices, values):
        row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)

        if rows < 0 or cols < 0:
            raise UsageError("matrix dimensions must be nonnegative")
        if row_offsets.shape != (rows + 1,):
            raise UsageError(f"row_offsets must have length rows+1={rows + 1}, got {row_offsets.shape}")
        if row_offsets[0] != 0 or np.any(np.diff(row_offsets) < 0):
            raise UsageError("row_offsets must start at 0 and be nondecreasing")
        nnz = int(row_offsets[-1])
        if col_indices.shape != (nnz,) or values.shape != (nnz,):
            raise UsageError("col_indices/values length must equal row_offsets[-1]")
        if nnz and (col_indices.min() < 0 or col_indices.max() >= cols):
            raise UsageError("column index out of range")
        if not np.all(np.isfinite(values)):
            raise UsageError("matrix values must be finite")
        if nnz > 1:
            # strictly increasing columns inside each row (sorted + deduplicated)
            lengths = np.diff(row_offsets)
            first_of_row = np.zeros(nnz, dtype=bool)
            first_of_row[row_offsets[:-1][lengths > 0]] = True
            same_row = ~first_of_row[1:]
            if np.any(np.diff(col_indices)[same_row] <= 0):
                raise UsageError("columns must be strictly increasing within each row")

        self.rows = int(rows)
        self.cols = int(cols)
        self.row_offsets = row_offsets
        self.col_indices = col_indices
        self.values = values
        self._entry_rows = np.repeat(np.arange(rows, dtype=np.int64), np.diff(row_offsets))
        for name in ("row_offsets", "col_indices", "values", "_entry_rows"):
            getattr(self, name).setflags(write=False)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, row_idx, col_idx, vals) -> "SparseMatrix":
        """Build from triplets; duplicates are summed, columns get sorted."""
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (row_idx.shape == col_idx.shape == vals.shape):
            raise UsageError("COO triplet arrays must have equal length")
        order = np.lexsort((col_idx, row_idx))
        row_idx, col_idx, vals = row_idx[order], col_idx[order], vals[order]
        if row_idx.size:
            keep = np.ones(row_idx.size, dtype=bool)
            keep[1:] = (np.diff(row_idx) != 0) | (np.diff(col_idx) != 0)
            group = np.cumsum(keep) - 1
            merged = np.bincount(group, weights=vals, minlength=int(group[-1]) + 1)
            row_idx, col_idx, vals = row_idx[keep], col_idx[keep], merged
        offsets = np.zeros(rows + 1, dtype=np.int64)
        np.add.at(offsets, row_idx + 1, 1)
        offsets = np.cumsum(offsets)
        return cls(rows, cols, offsets, col_idx, vals)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2:
            raise UsageError("from_dense expects a 2-d array")
        r, c = np.nonzero(dense)
        return cls.from_coo(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    @classmethod
    def identity(cls, n) -> "SparseMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    # -- basic queries -----------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self._entry_rows, self.col_indices] = self.values
        return out

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"

    # -- products ----------------------------------------------------------

    def matvec(self, x) -> np.ndarray:
        """A @ x with sequential per-row accumulation over stored entries."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cols,):
            raise UsageError(f"matvec expects length {self.cols}, got {x.shape}")
        if self.nnz == 0:
            return np.zeros(self.rows)
        prods = self.values * x[self.col_indices]
        return np.bincount(self._entry_rows, weights=prods, minlength=self.rows)

    def rmatvec(self, y) -> np.ndarray:
        """A.T @ y, accumulated from the stored entries (no transpose is built)."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.rows,):
            raise UsageError(f"rmatvec expects length {self.rows}, got {y.shape}")
        if self.nnz == 0:
            return np.zeros(self.cols)
        prods = self.values * y[self._entry_rows]
        return np.bincount(self.col_indices, weights=prods, minlength=self.cols)

    def matmat(self, X) -> np.ndarray:
        """A @ X for a dense (cols, k) channel matrix, one matvec per column."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.cols:
            raise UsageError(f"matmat expects shape ({self.cols}, k), got {X.shape}")
        out = np.empty((self.rows, X.shape[1]))
        for j in range(X.shape[1]):
            out[:, j] = self.matvec(X[:, j])
        return out

    def rmatmat(self, Y) -> np.ndarray:
        """A.T @ Y for a dense (rows, k) channel matrix."""
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[0] != self.rows:
            raise UsageError(f"rmatmat expects shape ({self.rows}, k), got {Y.shape}")
        out = np.empty((self.cols, Y.shape[1]))
        for j in range(Y.shape[1]):
            out[:, j] = self.rmatvec(Y[:, j])
        return out


_POWER_SEED = 20240131


def estimate_spectral_norm(A: SparseMatrix, rel_tol: float = 1e-4, max_iter: int = 1000) -> float:
    """Estimate ||A||_2 by power iteration on A.T A.

    Returns an estimate that approaches the true norm from below; with the
    default tolerance the result is within ``rel_tol`` of ``||A||_2`` with
    high probability (the start vector is drawn from a fixed-seed RNG, so the
    estimate is deterministic).  An all-zero matrix yields 0.0 and a warning.
    """
    if rel_tol <= 0:
        raise UsageError("rel_tol must be positive")
    if A.rows == 0 or A.cols == 0 or not np.any(A.values):
        warnings.warn("spectral norm of an all-zero matrix is 0", stacklevel=2)
        return 0.0
    rng = np.random.default_rng(_POWER_SEED)
    for _ in range(4):  # redraw if the start vector lands in the null space
        v = rng.standard_normal(A.cols)
        nv = np.linalg.norm(v)
        v /= nv
        est = 0.0
        for _ in range(max_iter):
            z = A.rmatvec(A.matvec(v))
            nz = np.linalg.norm(z)
            if nz == 0.0:
                break
            new_est = np.sqrt(nz)
            v = z / nz
            if new_est - est <= 0.1 * rel_tol * new_est:
                return float(new_est)
            est = new_est
        if est > 0.0:
            return float(est)
    raise NumericalFailureError("power iteration failed to leave the null space")
