import numpy as np
import pytest

from pdhgnet.linalg import SparseMatrix
from pdhgnet.model import LpInstance


@pytest.fixture
def tiny_lp():
    """min x  s.t. x >= 1,  0 <= x <= 2.  Optimum x* = 1, y* = 1 by hand KKT:
    the reduced cost 1 - y vanishes at y = 1 and the constraint is tight."""
    G = SparseMatrix(1, 1, [0, 1], [0], [1.0])
    return LpInstance(G=G, c=[1.0], h=[1.0], l=[0.0], u=[2.0], name="tiny")


def random_sparse(rows, cols, density, seed):
    rng = np.random.default_rng(seed)
    keep = rng.random((rows, cols)) < density
    keep[np.arange(rows) % rows, rng.integers(0, cols, rows)] = True
    r, c = np.nonzero(keep)
    return SparseMatrix.from_coo(rows, cols, r, c, rng.standard_normal(r.size))
