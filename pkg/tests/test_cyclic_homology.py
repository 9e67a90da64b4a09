import numpy as np
import pytest
from hypothesis import given, strategies as st

from higher_aps.cyclic_homology import (
    CyclicCochain, IdempotentPath, RelativeCochain, RelativeKTriple, UnitalElement, b_plus_B,
    chern_pair, connes_B, const_chern, evaluate_mixed, excision_triple, hochschild_b,
    random_normalized_cochain, random_unital, relative_differential, relative_pair,
    relative_residual, trace_cochain, transgression_pair, unit_like,
)
from higher_aps.errors import IdempotencyError

DIM = 6


def tuple_of(n, rng, dim=DIM):
    return [random_unital(dim, rng) for _ in range(n)]


def rotation_path(dim, rng):
    """Rank-1 projector rotated by exp(sA), A anti-Hermitian; analytic derivative."""
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    A = (X - X.conj().T) / 2
    w, U = np.linalg.eig(A)
    Ui = np.linalg.inv(U)
    p0 = np.zeros((dim, dim), complex)
    p0[0, 0] = 1

    def rot(s):
        return U @ np.diag(np.exp(s * w)) @ Ui

    def value(s):
        R = rot(s)
        return R @ p0 @ R.conj().T

    def deriv(s):
        p = value(s)
        return A @ p - p @ A

    return IdempotentPath(value, deriv)


def derivation_cocycle(dim, rng):
    """tau(a0,a1,a2) = tr(a0 (d1 a1 d2 a2 - d2 a1 d1 a2)) with commuting inner derivations."""
    X1, X2 = np.diag(rng.normal(size=dim)), np.diag(rng.normal(size=dim))

    def tau(a0, a1, a2):
        d = lambda X, a: X @ a.body - a.body @ X
        return np.trace(a0.materialize() @ (d(X1, a1) @ d(X2, a2) - d(X2, a1) @ d(X1, a2)))

    return CyclicCochain(2, tau), X1, X2


def random_idempotent(dim, rank, rng, cond=3.0):
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    Q, _ = np.linalg.qr(X)
    S = np.eye(dim) + (cond - 1) / 4 * (rng.normal(size=(dim, dim)) / np.sqrt(dim))
    P = Q[:, :rank] @ Q[:, :rank].conj().T
    return S @ P @ np.linalg.inv(S)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_b_squared(k, rng):
    phi = random_normalized_cochain(k, DIM, rng)
    assert abs(hochschild_b(hochschild_b(phi))(*tuple_of(k + 3, rng))) < 1e-12


@pytest.mark.parametrize("k", [2, 3, 4])
def test_B_squared(k, rng):
    phi = random_normalized_cochain(k, DIM, rng)
    assert abs(connes_B(connes_B(phi))(*tuple_of(k - 1, rng))) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bB_anticommute(k, rng):
    phi = random_normalized_cochain(k, DIM, rng)
    args = tuple_of(k + 1, rng)
    assert abs(hochschild_b(connes_B(phi))(*args) + connes_B(hochschild_b(phi))(*args)) < 1e-12


def test_trace_is_hochschild_closed(rng):
    a0, a1 = (random_unital(DIM, rng, with_scalar=False) for _ in range(2))
    assert abs(hochschild_b(trace_cochain())(a0, a1)) < 1e-14


def test_normalized_unit_insertion(rng):
    phi = random_normalized_cochain(3, DIM, rng)
    args = tuple_of(4, rng)
    for i in range(1, 4):
        probe = list(args)
        probe[i] = unit_like(args[0])
        assert phi(*probe) == 0


def block_hom(n):
    return lambda x: x[:n, :n]


def test_relative_zero_and_d_squared(rng):
    n = DIM // 2
    zero = RelativeCochain({2: CyclicCochain(2, lambda *a: 0.0)}, {3: CyclicCochain(3, lambda *a: 0.0)},
                           block_hom(n))
    assert relative_residual(zero, [tuple_of(3, rng)], [tuple_of(4, rng, n)]) == 0

    tau = {1: random_normalized_cochain(1, DIM, rng), 2: random_normalized_cochain(2, DIM, rng)}
    sigma = {2: random_normalized_cochain(2, n, rng), 3: random_normalized_cochain(3, n, rng)}
    r = RelativeCochain(tau, sigma, block_hom(n))
    dd = relative_differential(relative_differential(r))

    def upper(m):
        a = random_unital(m, rng)
        body = a.body.copy()
        body[n:, :n] = 0  # block upper triangular, so the corner map is multiplicative
        return UnitalElement(body, a.scalar)

    for deg in range(1, 5):
        assert abs(evaluate_mixed(dd.tau, [upper(DIM) for _ in range(deg + 1)])) < 1e-12
        assert abs(evaluate_mixed(dd.sigma, tuple_of(deg + 1, rng, n))) < 1e-12


def test_chern_rank_and_equal():
    P = np.diag([1.0, 0.0])
    assert chern_pair(P, np.zeros((2, 2)), trace_cochain()) == 1
    rng = np.random.default_rng(1)
    Pi = random_idempotent(DIM, 2, rng)
    tau = random_normalized_cochain(2, DIM, rng)
    assert chern_pair(Pi, Pi, tau) == 0


def test_chern_degree2_expansion_oracle(rng):
    tau, X1, X2 = derivation_cocycle(4, rng)
    P, Q = random_idempotent(4, 1, rng), random_idempotent(4, 2, rng)

    def direct(E):
        d1, d2 = X1 @ E - E @ X1, X2 @ E - E @ X2
        return -2 * np.trace((E - 0.5 * np.eye(4)) @ (d1 @ d2 - d2 @ d1))

    assert abs(chern_pair(P, Q, tau) - (direct(P) - direct(Q))) < 1e-12
    assert const_chern(2) == -2 and const_chern(0) == 1 and const_chern(4) == 12


def test_chern_is_a_cycle(rng):
    P = random_idempotent(DIM, 2, rng)
    Q = UnitalElement(-random_idempotent(DIM, 3, rng), 1.0)
    exact = b_plus_B({1: random_normalized_cochain(1, DIM, rng), 3: random_normalized_cochain(3, DIM, rng)})
    assert abs(chern_pair(P, Q, exact)) < 1e-10


def test_chern_rejects_non_idempotent(rng):
    with pytest.raises(IdempotencyError):
        chern_pair(np.eye(3) * 0.7, np.zeros((3, 3)), trace_cochain())


def test_constant_path_transgression(rng):
    P = random_idempotent(DIM, 2, rng)
    sigma = random_normalized_cochain(3, DIM, rng)
    assert transgression_pair(IdempotentPath.constant(P), sigma).value == 0


def test_rotating_projector_trace_transgression_vanishes(rng):
    path = rotation_path(DIM, rng)
    sigma = CyclicCochain(1, lambda a0, a1: np.trace(a0.materialize() @ a1.materialize()))
    assert abs(transgression_pair(path, sigma).value) < 1e-12


def test_path_reversal_negates(rng):
    path = rotation_path(DIM, rng)
    sigma = random_normalized_cochain(1, DIM, rng)
    fwd = transgression_pair(path, sigma).value
    back = transgression_pair(path.reversed(), sigma).value
    assert abs(fwd) > 1e-3
    assert abs(fwd + back) < 1e-8


def test_finite_difference_derivative_matches_analytic(rng):
    path = rotation_path(DIM, rng)
    fd = IdempotentPath(path.value)
    sigma = random_normalized_cochain(3, DIM, rng)
    assert abs(transgression_pair(path, sigma).value - transgression_pair(fd, sigma).value) < 1e-7


def warped(path, a):
    """s -> (e^{as} - 1)/(e^a - 1), a smooth increasing bijection of [0, 1]."""
    phi = lambda s: np.expm1(a * s) / np.expm1(a)
    dphi = lambda s: a * np.exp(a * s) / np.expm1(a)
    return IdempotentPath(lambda s: path.value(phi(s)), lambda s: path.derivative(phi(s)) * dphi(s))


def test_relative_pair_of_coboundary_vanishes(rng):
    # (tau, b tau) = d(0, -tau) for any degree-0 tau; pairs to zero with any triple
    M = rng.normal(size=(DIM, DIM))
    tau = CyclicCochain(0, lambda a: np.trace(a.body @ M))
    r = RelativeCochain.homogeneous(tau, hochschild_b(tau), lambda x: x)
    path = rotation_path(DIM, rng)
    triple = RelativeKTriple(path.value(1.0), path.value(0.0), path)
    assert abs(relative_pair(triple, r).value) < 1e-9
    assert abs(relative_pair(RelativeKTriple(path.value(1.0), path.value(0.0), warped(path, 2.0)), r).value) < 1e-8


def test_relative_pair_reparametrization_invariant(rng):
    path = rotation_path(DIM, rng)
    tau = random_normalized_cochain(2, DIM, rng)
    sigma = random_normalized_cochain(3, DIM, rng)
    r = RelativeCochain.homogeneous(tau, sigma, lambda x: x)
    t1 = RelativeKTriple(path.value(1.0), path.value(0.0), path)
    t2 = RelativeKTriple(path.value(1.0), path.value(0.0), warped(path, 1.5))
    assert abs(relative_pair(t1, r).value - relative_pair(t2, r).value) < 1e-8


def test_excision_reduces_to_absolute(rng):
    P, Q = random_idempotent(DIM, 2, rng), random_idempotent(DIM, 2, rng)
    tau = random_normalized_cochain(2, DIM, rng)
    r = RelativeCochain.homogeneous(tau, random_normalized_cochain(3, DIM, rng), lambda x: x)
    assert relative_pair(excision_triple(P, Q), r).value == chern_pair(P, Q, tau)


def test_degree0_relative_pair_formula(rng):
    # const_0 = 1: value = tau(e1) - tau(e0) - int sigma([p', p], p)
    path = rotation_path(DIM, rng)
    tau = CyclicCochain(0, lambda a: np.trace(a.body @ np.diag(np.arange(DIM))))
    sigma = random_normalized_cochain(1, DIM, rng)
    r = RelativeCochain.homogeneous(tau, sigma, lambda x: x)
    e1, e0 = path.value(1.0), path.value(0.0)
    direct = tau(e1) - tau(e0) - transgression_pair(path, sigma).value
    assert abs(relative_pair(RelativeKTriple(e1, e0, path), r).value - direct) < 1e-12


@given(st.integers(0, 10**6), st.integers(1, 3))
def test_complex_identities_property(seed, k):
    rng = np.random.default_rng(seed)
    phi = random_normalized_cochain(k, 4, rng)
    args = tuple_of(k + 3, rng, 4)
    assert abs(hochschild_b(hochschild_b(phi))(*args)) < 1e-12
    assert abs(hochschild_b(connes_B(phi))(*args[:k + 1]) + connes_B(hochschild_b(phi))(*args[:k + 1])) < 1e-12
