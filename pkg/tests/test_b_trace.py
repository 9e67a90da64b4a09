import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from higher_aps.b_trace import (
    RegularizationData, SlabOperator, b_trace, b_trace_from_diagonal, commutator_defect, default_regularization,
    fiber_weight_decay, lie_derivative, site_diagonal, triple_norm, triple_norm_k,
)
from higher_aps.errors import PreconditionError
from higher_aps.group_core import free_abelian
from higher_aps.lattice_models import BKernel, FiberField, IndicialFamily, SlabGeometry, invariant_matrix
from higher_aps.verify_suites import random_b_operator, random_residual_operator

GEOM = SlabGeometry(40, 2, 2)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_residual_operators_have_ordinary_trace(seed):
    rng = np.random.default_rng(seed)
    R = random_residual_operator(GEOM, rng)
    reg = RegularizationData(GEOM, 30)
    assert b_trace(R, reg, p_inf=0.0) == pytest.approx(np.trace(R), abs=1e-10)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.integers(0, 28))
def test_b_trace_independent_of_offset(seed, offset):
    rng = np.random.default_rng(seed)
    P = random_b_operator(GEOM, rng)
    ref = b_trace(P, RegularizationData(GEOM, 30, 0))
    assert b_trace(P, RegularizationData(GEOM, 30, offset)) == pytest.approx(ref, abs=1e-10)


def test_shift_commutator_defect_is_one():
    geom = SlabGeometry(40, 2, 1)
    fwd = BKernel.from_kernel({1: np.eye(1)}, geom)
    back = BKernel.from_kernel({-1: np.eye(1)}, geom)
    lhs, rhs = commutator_defect(fwd, back, RegularizationData(geom, 30))
    assert rhs == pytest.approx(1.0, abs=1e-14)
    assert lhs == pytest.approx(1.0, abs=1e-12)


def test_random_commutator_defects_agree(rng):
    reg = RegularizationData(GEOM, 30)
    for _ in range(5):
        A, B = random_b_operator(GEOM, rng), random_b_operator(GEOM, rng)
        lhs, rhs = commutator_defect(A, B, reg)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_lie_derivative_of_invariant_and_linear_operators():
    geom = SlabGeometry(12, 2, 1)
    K = {0: np.eye(1), 1: 2 * np.eye(1), -1: 3 * np.eye(1)}
    M = invariant_matrix(K, geom, region="all")
    L = lie_derivative(M, geom)
    inner = slice(2, geom.dim - 2)
    assert np.allclose(L[inner, inner], 0)
    T = np.diag(geom.t_values.astype(float))
    assert np.allclose(np.diag(lie_derivative(T, geom))[1:-1], 1.0)


def test_slab_operator_tracks_deep_value(rng):
    d = GEOM.fiber
    fib = FiberField(np.broadcast_to(np.eye(d), (8, d, d)).astype(complex))
    A = SlabOperator(np.eye(GEOM.dim, dtype=complex), GEOM, 1, fib)
    assert A.p_inf == pytest.approx(d)
    assert (A + A).p_inf == pytest.approx(2 * d) and (3 * A).p_inf == pytest.approx(3 * d)
    assert (A @ A).p_inf == pytest.approx(d)
    # the identity on the slab is translation invariant with no boundary term: bTr = sum chi * d
    reg = default_regularization(GEOM)
    p = site_diagonal(A.matrix, GEOM)
    assert b_trace(A, reg) == pytest.approx(b_trace_from_diagonal(p, d, reg))


def test_regularization_preconditions():
    with pytest.raises(PreconditionError):
        RegularizationData(GEOM, 30, 29)
    with pytest.raises(PreconditionError):
        RegularizationData(GEOM, 40)
    with pytest.raises(PreconditionError):
        b_trace(np.eye(GEOM.dim), RegularizationData(GEOM, 30))


def test_triple_norm_homogeneous(rng):
    reg = RegularizationData(GEOM, 30)
    P = random_b_operator(GEOM, rng)
    n = triple_norm(P, reg)
    assert n > 0 and triple_norm(np.zeros((GEOM.dim, GEOM.dim)), reg) == 0
    assert triple_norm(2.5 * P.matrix, reg) == pytest.approx(2.5 * n)
    G = free_abelian(1)
    blocks = {(0,): P.matrix, (2,): P.matrix}
    expected = np.sqrt(n ** 2 + (n * 3 ** 1.5) ** 2)
    assert triple_norm_k(blocks, 1.5, reg, G) == pytest.approx(expected)


def test_fiber_weight_decay_bound():
    fam = IndicialFamily({0: np.eye(2), 1: 0.5 * np.eye(2)}, 2)
    C, ratios = fiber_weight_decay(fam)
    assert np.all(ratios <= C + 1e-12) and np.isfinite(C)
