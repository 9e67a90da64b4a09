import numpy as np
import pytest
from hypothesis import given, strategies as st

from higher_aps.errors import ConfigError, InfeasibleError
from higher_aps.lattice_models import (
    BKernel, FiberField, IndicialFamily, SlabGeometry, build_cylinder_dirac, build_slab_model,
    circle_defect_model, cylinder_kernel, hofstadter_hamiltonian, inverse_indicial, invariant_matrix,
    kernel_from_fibers, kernel_product, lowest_band_projector, random_boundary, random_interior_perturbation,
    scheme_decay_cap, scheme_fiber_dim, verify_gap, verify_indicial_invertibility,
)


def random_kernel(rng, d, support):
    return {n: rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for n in range(-support, support + 1)}


def test_geometry_indexing():
    g = SlabGeometry(depth=5, interior=2, fiber=3)
    assert g.t_min == -4 and g.n_sites == 7 and g.dim == 21
    assert g.block(-4) == slice(0, 3) and g.block(2) == slice(18, 21)
    assert list(g.site_of_index()[:4]) == [-4, -4, -4, -3]


@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(0, 2))
def test_kernel_product_is_fiberwise_product(seed, d, support):
    rng = np.random.default_rng(seed)
    a, b = random_kernel(rng, d, support), random_kernel(rng, d, support)
    fa, fb = IndicialFamily(a, d), IndicialFamily(b, d)
    lam = rng.uniform(-np.pi, np.pi)
    assert np.allclose((fa @ fb)(lam), fa(lam) @ fb(lam), atol=1e-12)


@given(st.integers(0, 10_000))
def test_kernel_round_trip_through_fibers(seed):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, 2, 2)
    back = kernel_from_fibers(IndicialFamily(k, 2).on_grid(16))
    assert set(back) == set(k)
    assert all(np.allclose(back[n], k[n], atol=1e-12) for n in k)


def test_forward_symbol_closed_form(rng):
    B = random_boundary(3, rng)
    fam = build_cylinder_dirac(B, "forward").indicial_plus()
    for lam in rng.uniform(-np.pi, np.pi, size=5):
        assert np.allclose(fam(lam), np.eye(3) + B - np.exp(1j * lam) * np.eye(3), atol=1e-13)


def test_balanced_symbol_closed_form(rng):
    B = random_boundary(2, rng)
    fam = build_cylinder_dirac(B, "balanced").indicial_plus()
    lam = 0.7
    top = np.eye(2) + B - np.exp(1j * lam) * np.eye(2)
    bottom = B - np.eye(2) + np.exp(-1j * lam) * np.eye(2)
    expected = np.block([[top, np.zeros((2, 2))], [np.zeros((2, 2)), bottom]])
    assert np.allclose(fam(lam), expected, atol=1e-13)
    assert scheme_fiber_dim(2, "balanced") == 4


def test_unknown_scheme_rejected(rng):
    with pytest.raises(ConfigError):
        cylinder_kernel(np.eye(2), "central")


def test_decay_cap_matches_inverse_kernel_decay(rng):
    B = random_boundary(3, rng, 0.8, 1.2)
    fam = build_cylinder_dirac(B, "forward").indicial_plus()
    inv = inverse_indicial(fam)
    shells = {}
    for n, block in inv.kernel.items():
        shells[abs(n)] = max(shells.get(abs(n), 0.0), np.max(np.abs(block)))
    # asymptotic rate from the slowest side, measured well above the truncation floor
    k = max(r for r, m in shells.items() if m > 1e-9) - 4
    rate = np.log(shells[k] / shells[k + 4]) / 4
    assert rate == pytest.approx(scheme_decay_cap(B, "forward"), rel=0.02)
    assert 0 < inv.epsilon < np.inf
    # the inverse really inverts fiberwise
    lam = 0.3
    assert np.allclose(IndicialFamily(inv.kernel, 3)(lam) @ fam(lam), np.eye(3), atol=1e-9)


def test_non_invertible_symbol_detected():
    fam = build_cylinder_dirac(np.zeros((1, 1)), "forward").indicial_plus()  # 1 - e^{i lam} vanishes at 0
    assert not verify_indicial_invertibility(fam).passed
    with pytest.raises(InfeasibleError):
        inverse_indicial(fam)


def test_gap_check(rng):
    B = random_boundary(4, rng, 0.8, 1.2)
    assert verify_gap(B, 0.5).passed
    assert not verify_gap(B, 0.9).passed
    geom = SlabGeometry(10, 1, 4)
    with pytest.raises(InfeasibleError):
        build_slab_model(B, geom, gap=0.9).require_gap()


def test_slab_model_structure(rng):
    B = random_boundary(2, rng, real=True)
    geom = SlabGeometry(12, 2, 4)
    pert = random_interior_perturbation(geom, rng, real=True)
    M = build_slab_model(B, geom, "balanced", pert, 0.1)
    assert M.self_adjoint_residual() == 0 and M.grading_residual() == 0
    K = cylinder_kernel(B, "balanced")
    assert np.allclose(M.d_plus[geom.block(-5), geom.block(-5)], K[0])
    assert np.allclose(M.d_plus[geom.block(-5), geom.block(-4)], K[-1])
    assert np.allclose(M.d_plus[geom.block(1), geom.block(1)], K[0] + pert[1])
    with pytest.raises(ConfigError):
        build_slab_model(B, geom, "balanced", {0: np.eye(4)})


def test_random_boundary_spectrum(rng):
    B = random_boundary(6, rng, 0.8, 1.2, signs=[1, 1, 1, -1, -1, -1], real=True)
    ev = np.linalg.eigvalsh(B)
    assert np.isrealobj(B)
    assert np.all((np.abs(ev) >= 0.8 - 1e-12) & (np.abs(ev) <= 1.2 + 1e-12))
    assert np.sum(np.sign(ev)) == 0


def test_bkernel_split_and_products(rng):
    geom = SlabGeometry(16, 2, 2)
    ka, kb = random_kernel(rng, 2, 1), random_kernel(rng, 2, 1)
    R = np.zeros((geom.dim, geom.dim), complex)
    R[-4:, -4:] = rng.normal(size=(4, 4))
    A = BKernel.from_kernel(ka, geom, R)
    assert np.allclose(A.residual_part(), R)
    B = BKernel.from_kernel(kb, geom)
    AB = A @ B
    assert set(AB.kernel) == set(kernel_product(ka, kb))
    # deep in the cylinder the product matrix is the invariant product
    t = -8
    assert np.allclose(AB.matrix[geom.block(t), geom.block(t)], kernel_product(ka, kb)[0])
    assert (A + B).norm() > 0 and np.allclose((A - A).matrix, 0)


def test_invariant_matrix_regions(rng):
    geom = SlabGeometry(4, 2, 1)
    K = {0: np.array([[2.0]]), -1: np.array([[1.0]])}
    cyl = invariant_matrix(K, geom)
    full = invariant_matrix(K, geom, region="all")
    assert cyl[geom.block(1), geom.block(1)].sum() == 0
    assert full[geom.block(1), geom.block(1)].sum() == 2.0


def test_fiber_field_operations(rng):
    k = random_kernel(rng, 2, 2)
    F = FiberField.from_kernel(k, 2, 32)
    fam = IndicialFamily(k, 2)
    assert np.allclose(F.lam_derivative().values, fam.derivative_on_grid(32), atol=1e-11)
    assert F.fourier_tail() < 1e-12
    assert FiberField.identity(3, 8).circle_trace() == pytest.approx(2 * np.pi * 3)
    G = FiberField.from_kernel(random_kernel(rng, 2, 1), 2, 32)
    assert np.allclose((F @ G).values, F.values @ G.values)
    assert np.allclose(F.adjoint().adjoint().values, F.values)
    assert set(F.kernel()) == set(k)


def test_hofstadter_periodic_in_twist():
    H0 = hofstadter_hamiltonian(4, 1, (0.3, -0.2))
    H1 = hofstadter_hamiltonian(4, 1, (0.3 + 2 * np.pi, -0.2 - 2 * np.pi))
    assert np.allclose(H0, H0.conj().T) and np.allclose(H0, H1)
    P, gap = lowest_band_projector(6, 2, (0.1, 0.4))
    assert np.allclose(P @ P, P, atol=1e-12) and round(np.trace(P).real) == 2 and gap > 0


@pytest.mark.parametrize("extra", [-2, -1, 0, 1, 3])
def test_circle_defect_dimensions(extra, rng):
    M = circle_defect_model(5, 2, extra, rng)
    n, m = M.dims
    assert n - m == extra


def test_inverse_decay_grows_with_boundary_gap():
    rates = []
    for mu in (0.5, 1.0, 2.0):
        fam = build_cylinder_dirac(np.array([[mu]]), "forward").indicial_plus()
        rates.append(inverse_indicial(fam).epsilon)
    assert rates[0] < rates[1] < rates[2]


def test_balanced_fiber_invertible_at_lambda_pi(rng):
    B = random_boundary(3, rng, 0.8, 1.2)
    fam = build_cylinder_dirac(B, "balanced").indicial_plus()
    assert np.linalg.svd(fam(np.pi), compute_uv=False)[-1] > 0.1
