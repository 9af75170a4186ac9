import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdhgnet.errors import UsageError
from pdhgnet.linalg import SparseMatrix
from pdhgnet.model import (
    SENSE_EQ,
    SENSE_GE,
    SENSE_LE,
    GeneralLp,
    LpInstance,
    canonicalize,
    kkt_residuals,
    lagrangian,
    pd_gap,
    project_box,
    project_nonneg,
)

from conftest import random_sparse


def one_row_general(sense, coeff=1.0, rhs=4.0):
    A = SparseMatrix(1, 1, [0, 1], [0], [coeff])
    return GeneralLp(
        A=A, senses=(sense,), rhs=[rhs], c=[1.0], l=[0.0], u=[np.inf], name="g"
    )


class TestCanonicalize:
    def test_le_row_flips_sign(self):
        inst = canonicalize(one_row_general(SENSE_LE, coeff=1.0, rhs=4.0))
        assert inst.G.to_dense().tolist() == [[-1.0]]
        assert inst.h.tolist() == [-4.0]

    def test_eq_row_splits(self):
        inst = canonicalize(one_row_general(SENSE_EQ, coeff=1.0, rhs=2.0))
        assert inst.G.to_dense().tolist() == [[1.0], [-1.0]]
        assert inst.h.tolist() == [2.0, -2.0]

    def test_ge_rows_unchanged(self):
        g = one_row_general(SENSE_GE, coeff=3.0, rhs=1.5)
        inst = canonicalize(g)
        assert inst.G.to_dense().tolist() == [[3.0]]
        assert inst.h.tolist() == [1.5]

    def test_row_count_formula(self):
        A = random_sparse(6, 4, 0.6, seed=0)
        senses = (SENSE_GE, SENSE_LE, SENSE_EQ, SENSE_EQ, SENSE_LE, SENSE_GE)
        g = GeneralLp(A=A, senses=senses, rhs=np.zeros(6), c=np.ones(4), l=np.zeros(4), u=np.ones(4))
        inst = canonicalize(g)
        assert inst.num_cons == 2 + 2 + 2 * 2

    @pytest.mark.parametrize("seed", range(4))
    def test_feasible_set_preserved(self, seed):
        rng = np.random.default_rng(seed)
        A = random_sparse(5, 3, 0.7, seed=seed)
        senses = tuple(rng.choice([SENSE_GE, SENSE_LE, SENSE_EQ], 5))
        x = rng.uniform(0.0, 1.0, 3)
        # choose rhs so x is feasible for the general form
        Ax = A.matvec(x)
        rhs = np.where(
            [s == SENSE_LE for s in senses],
            Ax + rng.uniform(0.0, 1.0, 5),
            np.where([s == SENSE_EQ for s in senses], Ax, Ax - rng.uniform(0.0, 1.0, 5)),
        )
        g = GeneralLp(A=A, senses=senses, rhs=rhs, c=np.ones(3), l=np.zeros(3), u=np.ones(3))
        inst = canonicalize(g)
        assert np.all(inst.G.matvec(x) >= inst.h - 1e-12)


class TestLagrangian:
    def test_direct_evaluation(self, tiny_lp):
        # c x - y G x + h y = 2 - 6 + 3
        assert lagrangian(tiny_lp, [2.0], [3.0]) == pytest.approx(-1.0)

    def test_zero_dual_reduces_to_objective(self, tiny_lp):
        assert lagrangian(tiny_lp, [2.0], [0.0]) == pytest.approx(2.0)

    def test_zero_primal_reduces_to_rhs_term(self, tiny_lp):
        assert lagrangian(tiny_lp, [0.0], [3.0]) == pytest.approx(3.0)

    def test_dimension_mismatch(self, tiny_lp):
        with pytest.raises(UsageError):
            lagrangian(tiny_lp, [1.0, 2.0], [1.0])


class TestPdGap:
    def test_equal_points_vanish(self, tiny_lp):
        assert pd_gap(tiny_lp, [1.0], [1.0], [1.0], [1.0]) == pytest.approx(0.0)

    def test_hand_kkt_point(self, tiny_lp):
        # optimum (x*, y*) = (1, 1); the gap of the optimum against itself is 0
        assert pd_gap(tiny_lp, [1.0], [1.0], [1.0], [1.0]) == 0.0

    def test_antisymmetry(self, tiny_lp):
        a = pd_gap(tiny_lp, [2.0], [0.5], [1.0], [1.0])
        b = pd_gap(tiny_lp, [1.0], [1.0], [2.0], [0.5])
        assert a == pytest.approx(-b)

    def test_infeasible_reference_rejected(self, tiny_lp):
        with pytest.raises(UsageError):
            pd_gap(tiny_lp, [1.0], [1.0], [1.0], [-1.0])
        with pytest.raises(UsageError):
            pd_gap(tiny_lp, [1.0], [1.0], [5.0], [1.0])


class TestKktResiduals:
    def test_optimal_pair_all_zero(self, tiny_lp):
        rep = kkt_residuals(tiny_lp, [1.0], [1.0])
        assert rep.primal_residual <= 1e-12
        assert rep.dual_residual <= 1e-12
        assert rep.rel_gap <= 1e-12
        assert rep.objective == pytest.approx(1.0)

    def test_unit_violation_scaling(self):
        # two constraints, h = 0 on the second; x violates the first by exactly 1
        G = SparseMatrix.from_dense([[1.0], [1.0]])
        inst = LpInstance(G=G, c=[0.0], h=[1.0, 0.0], l=[0.0], u=[2.0])
        rep = kkt_residuals(inst, [0.0], [0.0, 0.0])
        assert rep.primal_residual == pytest.approx(1.0 / (1.0 + 1.0))

    def test_interior_suboptimal_point_has_gap(self, tiny_lp):
        rep = kkt_residuals(tiny_lp, [1.5], [0.0])
        assert rep.rel_gap > 0.0

    def test_infinite_bound_dual_violation_is_finite(self):
        # positive reduced cost with l = -inf cannot be absorbed: dual residual
        # charges it and the gap stays finite
        G = SparseMatrix.from_dense([[1.0]])
        inst = LpInstance(G=G, c=[1.0], h=[0.0], l=[-np.inf], u=[np.inf])
        rep = kkt_residuals(inst, [0.0], [0.0])
        assert rep.dual_residual > 0.0
        assert np.isfinite(rep.rel_gap)


class TestProjections:
    def test_inside_box_unchanged(self):
        z = np.array([0.5, 1.5])
        assert project_box(z, [0.0, 0.0], [2.0, 2.0]).tolist() == z.tolist()

    def test_clamp_low(self):
        assert project_box([-5.0], [0.0], [2.0]).tolist() == [0.0]

    def test_unbounded_passthrough(self):
        assert project_box([7.0], [-np.inf], [np.inf]).tolist() == [7.0]

    def test_nonneg_examples(self):
        assert project_nonneg([-1.0, 0.0, 2.0]).tolist() == [0.0, 0.0, 2.0]
        assert project_nonneg([-3.0, -1.0]).tolist() == [0.0, 0.0]

    def test_nonneg_idempotent(self):
        z = np.random.default_rng(0).standard_normal(20)
        once = project_nonneg(z)
        assert np.array_equal(project_nonneg(once), once)

    def test_bad_bounds_rejected(self):
        with pytest.raises(UsageError):
            project_box([0.0], [1.0], [0.0])

    @given(
        st.lists(st.floats(-100, 100), min_size=1, max_size=8),
        st.lists(st.floats(-100, 100), min_size=1, max_size=8),
    )
    @settings(max_examples=60, deadline=None)
    def test_box_idempotent_and_lipschitz(self, a, b):
        size = min(len(a), len(b))
        a = np.array(a[:size])
        b = np.array(b[:size])
        l = np.full(size, -1.0)
        u = np.full(size, 3.0)
        pa, pb = project_box(a, l, u), project_box(b, l, u)
        assert np.array_equal(project_box(pa, l, u), pa)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_signed_part_identity(self, z):
        # clip(z, l, u) agrees with l + (z-l)+ - (z-u)+ for finite bounds
        z = np.array(z)
        l = np.full(z.size, -2.0)
        u = np.full(z.size, 5.0)
        alt = l + np.maximum(z - l, 0.0) - np.maximum(z - u, 0.0)
        assert np.max(np.abs(project_box(z, l, u) - alt)) <= 1e-15


class TestInstanceValidation:
    def test_bound_order_enforced(self):
        G = SparseMatrix.identity(1)
        with pytest.raises(UsageError):
            LpInstance(G=G, c=[1.0], h=[0.0], l=[2.0], u=[1.0])

    def test_nan_rejected(self):
        G = SparseMatrix.identity(1)
        with pytest.raises(UsageError):
            LpInstance(G=G, c=[np.nan], h=[0.0], l=[0.0], u=[1.0])

    def test_infinite_rhs_rejected(self):
        G = SparseMatrix.identity(1)
        with pytest.raises(UsageError):
            LpInstance(G=G, c=[1.0], h=[np.inf], l=[0.0], u=[1.0])
