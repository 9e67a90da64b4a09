from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from higher_aps.errors import ConfigError, PreconditionError
from higher_aps.group_cohomology import (
    BUILTIN_COCYCLES, GroupCochain, HomogeneousCochain, antisymmetrize, builtin_cocycle,
    cech_form_omega_c, check_cyclic_shift, check_growth, check_matrix_antisymmetry,
    check_normalized, circle_cover, from_homogeneous, hom_boundary, nhom_delta,
    random_rational_cochain, to_homogeneous, torus_cover,
)
from higher_aps.group_core import cyclic_group, free_abelian, free_group

Z, Z2 = free_abelian(1), free_abelian(2)
GROUPS = [Z2, free_group(2), cyclic_group(5)]


def all_builtins():
    return [builtin_cocycle("trivial-degree-0"), builtin_cocycle("linear-on-Zk", {"weights": (2, -1)}),
            builtin_cocycle("area-on-Z2"), builtin_cocycle("volume-on-Z2p", {"rank": 4})]


def test_zero_cochain_has_zero_delta(rng):
    zero = GroupCochain(Z2, 2, lambda g, h: 0)
    dz = nhom_delta(zero)
    for _ in range(20):
        assert dz(*(Z2.random_element(rng, 5) for _ in range(3))) == 0


def test_linear_delta_arithmetic():
    c = GroupCochain(Z, 1, lambda g: g[0])
    assert nhom_delta(c)((2,), (3,)) == 0


def test_area_is_cocycle(rng):
    dc = nhom_delta(builtin_cocycle("area-on-Z2"))
    for _ in range(100):
        assert dc(*(Z2.random_element(rng, 10) for _ in range(3))) == 0


def test_volume_z4_is_cocycle(rng):
    c = builtin_cocycle("volume-on-Z2p", {"rank": 4})
    dc = nhom_delta(c)
    G = c.group
    for _ in range(100):
        assert dc(*(G.random_element(rng, 6) for _ in range(5))) == 0


@pytest.mark.parametrize("G", GROUPS)
@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_delta_squared_exact(G, k, rng):
    c = random_rational_cochain(G, k, seed=k)
    ddc = nhom_delta(nhom_delta(c))
    for _ in range(60):
        assert ddc(*(G.random_element(rng, 3) for _ in range(k + 2))) == 0


@pytest.mark.parametrize("G", GROUPS)
@pytest.mark.parametrize("k", [1, 2, 3])
def test_homogeneous_round_trips(G, k, rng):
    c = random_rational_cochain(G, k, seed=10 + k)
    back = from_homogeneous(to_homogeneous(c))
    phi = HomogeneousCochain(G, k, lambda *gs: to_homogeneous(c)(*gs))
    phi_back = to_homogeneous(from_homogeneous(phi))
    for _ in range(50):
        gs = tuple(G.random_element(rng, 3) for _ in range(k))
        assert back(*gs) == c(*gs)
        hs = tuple(G.random_element(rng, 3) for _ in range(k + 1))
        assert phi_back(*hs) == phi(*hs)


@pytest.mark.parametrize("G", GROUPS)
def test_chain_map(G, rng):
    c = random_rational_cochain(G, 2, seed=3)
    lhs, rhs = to_homogeneous(nhom_delta(c)), hom_boundary(to_homogeneous(c))
    for _ in range(50):
        gs = tuple(G.random_element(rng, 3) for _ in range(4))
        assert lhs(*gs) == rhs(*gs)


def test_zero_maps_to_zero(rng):
    phi = to_homogeneous(GroupCochain(Z2, 2, lambda g, h: 0))
    assert phi((1, 0), (0, 3), (2, 2)) == 0


def test_antisymmetrize_two_terms():
    f = {(0,): Fraction(3), (1,): Fraction(-2)}
    phi = HomogeneousCochain(Z, 1, lambda a, b: f.get(a, Fraction(7)))
    alt = antisymmetrize(phi)
    assert alt((0,), (1,)) == (f[(0,)] - f[(1,)]) / 2


def test_antisymmetrize_idempotent(rng):
    c = random_rational_cochain(Z2, 2, seed=5)
    alt = antisymmetrize(to_homogeneous(c))
    alt2 = antisymmetrize(alt)
    for _ in range(20):
        gs = tuple(Z2.random_element(rng, 3) for _ in range(3))
        assert alt2(*gs) == alt(*gs)


def test_antisymmetrized_image_satisfies_matrix_antisymmetry(rng):
    c = random_rational_cochain(Z2, 2, seed=9)
    image = from_homogeneous(antisymmetrize(to_homogeneous(c)))
    assert check_matrix_antisymmetry(image, rng, n=100) == 0


def test_antisymmetrize_refuses_high_degree():
    with pytest.raises(PreconditionError):
        antisymmetrize(HomogeneousCochain(free_abelian(7), 7, lambda *gs: 0))


@pytest.mark.parametrize("idx", range(4))
def test_builtins_satisfy_cocycle_properties(idx, rng):
    c = all_builtins()[idx]
    assert check_normalized(c, rng) == 0
    assert check_cyclic_shift(c, rng) == 0
    assert check_matrix_antisymmetry(c, rng) == 0
    assert check_growth(c, rng) <= 1.0


def test_builtin_values():
    assert builtin_cocycle("trivial-degree-0")() == 1
    assert builtin_cocycle("area-on-Z2")((1, 0), (0, 1)) == 1
    assert set(BUILTIN_COCYCLES) == {"trivial-degree-0", "linear-on-Zk", "area-on-Z2", "volume-on-Z2p"}
    with pytest.raises(ConfigError):
        builtin_cocycle("nope")


def test_omega_degree0_is_partition_of_unity():
    form = cech_form_omega_c(circle_cover(16), builtin_cocycle("trivial-degree-0"))
    assert np.max(np.abs(form.values - 1)) == 0


@pytest.mark.parametrize("n", [12, 20])
def test_omega_circle_linear(n):
    form = cech_form_omega_c(circle_cover(n), builtin_cocycle("linear-on-Zk"))
    assert abs(form.integral() - 1) < 1e-14


@pytest.mark.parametrize("n", [12, 16])
def test_omega_torus_area(n):
    # det(g,h) = x∪y - y∪x is twice the generator of H^2(Z^2), hence 2
    form = cech_form_omega_c(torus_cover(n), builtin_cocycle("area-on-Z2"))
    assert abs(form.integral() - 2) < 1e-12


def test_omega_rejects_wrong_degree():
    with pytest.raises(PreconditionError):
        cech_form_omega_c(circle_cover(12), builtin_cocycle("area-on-Z2"))


@given(st.integers(0, 10**6), st.integers(1, 3))
def test_delta_squared_property(seed, k):
    rng = np.random.default_rng(seed)
    c = random_rational_cochain(Z2, k, seed=seed)
    ddc = nhom_delta(nhom_delta(c))
    assert ddc(*(Z2.random_element(rng, 4) for _ in range(k + 2))) == 0
