import numpy as np
import pytest
from hypothesis import given, strategies as st

from higher_aps.errors import ConfigError, PreconditionError
from higher_aps.group_core import (
    GroupAlgebraElement, convolve, cyclic_group, free_abelian, free_group,
    nu_norm, random_element, rd_diagnostic,
)

Z = free_abelian(1)
Z2 = free_abelian(2)
F2 = free_group(2)
C6 = cyclic_group(6)
GROUPS = [Z, Z2, F2, C6]


def brute_convolve(a, b):
    out = {}
    for h in a.support:
        for k in b.support:
            g = a.group.mul(h, k)
            out[g] = out.get(g, 0) + a[h] * b[k]
    return out


@pytest.mark.parametrize("G", GROUPS)
def test_word_length_axioms(G, rng):
    e = G.identity
    assert G.word_length(e) == 0
    for _ in range(50):
        g, h = G.random_element(rng, 4), G.random_element(rng, 4)
        assert G.word_length(G.inv(g)) == G.word_length(g)
        assert G.word_length(G.mul(g, h)) <= G.word_length(g) + G.word_length(h)
        assert G.mul(g, G.inv(g)) == e


@pytest.mark.parametrize("G", GROUPS)
def test_associativity_sampled(G, rng):
    for _ in range(50):
        g, h, k = (G.random_element(rng, 3) for _ in range(3))
        assert G.mul(G.mul(g, h), k) == G.mul(g, G.mul(h, k))


def test_identity_convolution(rng):
    a = random_element(Z2, rng, 6, 3)
    assert convolve(GroupAlgebraElement.delta(Z2, (0, 0)), a).distance(a) == 0


def test_z_deltas_add():
    c = convolve(GroupAlgebraElement.delta(Z, (1,)), GroupAlgebraElement.delta(Z, (2,)))
    assert c.coeffs == {(3,): 1.0}


def test_convolution_matches_brute_force(rng):
    a, b = random_element(Z2, rng, 7, 3), random_element(Z2, rng, 5, 2)
    c = convolve(a, b)
    ref = brute_convolve(a, b)
    assert set(c.support) <= set(ref)
    for g, v in ref.items():
        assert abs(c[g] - v) < 1e-12


def test_mismatched_groups_rejected():
    with pytest.raises(ConfigError):
        convolve(GroupAlgebraElement.delta(Z, (0,)), GroupAlgebraElement.delta(Z2, (0, 0)))


def test_drop_tolerance():
    a = GroupAlgebraElement(Z, {(0,): 1e-16, (1,): 1.0})
    assert a.support == [(1,)]


def test_nu_norm_examples(rng):
    assert nu_norm(GroupAlgebraElement.delta(Z, (0,)), 5) == 1.0
    assert nu_norm(GroupAlgebraElement.delta(Z, (3,)), 1) == pytest.approx(4.0)
    a = random_element(Z, rng, 9, 6)
    direct = np.sqrt(sum((1 + abs(g[0])) ** 4 * abs(v) ** 2 for g, v in a.coeffs.items()))
    assert nu_norm(a, 2) == pytest.approx(direct, rel=1e-14)


@given(st.integers(0, 2**31), st.integers(0, 3), st.floats(-3, 3))
def test_nu_norm_is_a_norm(seed, k, s):
    rng = np.random.default_rng(seed)
    a, b = random_element(Z2, rng, 5, 3), random_element(Z2, rng, 5, 3)
    assert nu_norm(a + b, k) <= nu_norm(a, k) + nu_norm(b, k) + 1e-12
    assert abs(nu_norm(a.scale(s), k) - abs(s) * nu_norm(a, k)) < 1e-12 * (1 + nu_norm(a, k))
    assert nu_norm(a, k) <= nu_norm(a, k + 1) + 1e-12


@given(st.integers(0, 2**31))
def test_convolution_associative(seed):
    rng = np.random.default_rng(seed)
    G = [Z2, F2, C6][seed % 3]
    a, b, c = (random_element(G, rng, 4, 2) for _ in range(3))
    assert ((a * b) * c).distance(a * (b * c)) < 1e-12


def test_rd_identity():
    assert rd_diagnostic(GroupAlgebraElement.delta(Z, (0,)), 1, 3) == pytest.approx(1.0)


def test_rd_generators_of_z():
    a = GroupAlgebraElement(Z, {(1,): 0.5, (-1,): 0.5})
    assert rd_diagnostic(a, 1, 20) <= 1.0


def test_rd_free_group_ball():
    ball = F2.ball(1)
    a = GroupAlgebraElement(F2, {g: 1.0 / len(ball) for g in ball})
    assert len(F2.ball(6)) == 1457
    assert rd_diagnostic(a, 2, 6) <= 1.0


def test_rd_radius_precondition():
    with pytest.raises(PreconditionError):
        rd_diagnostic(GroupAlgebraElement.delta(Z, (4,)), 1, 3)


def test_finite_group_lengths():
    assert [C6.word_length(g) for g in range(6)] == [0, 1, 2, 3, 2, 1]
    assert sorted(C6.ball(2)) == [0, 1, 2, 4, 5]


def test_matrix_blocks_convolve(rng):
    A = {(i,): rng.normal(size=(3, 3)) for i in range(2)}
    B = {(i,): rng.normal(size=(3, 3)) for i in range(2)}
    c = convolve(GroupAlgebraElement(Z, A), GroupAlgebraElement(Z, B))
    assert np.allclose(c[(1,)], A[(0,)] @ B[(1,)] + A[(1,)] @ B[(0,)])
