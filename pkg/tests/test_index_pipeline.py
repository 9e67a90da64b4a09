import json
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from higher_aps.cyclic_homology import chern_pair
from higher_aps.errors import ConfigError, InfeasibleError, PreconditionError
from higher_aps.index_pipeline import (
    ModelSpec, Scenario, aps_check, as_term_extrapolate, build_model, constant, eta_invariant,
    higher_index_absolute, higher_index_relative, oracle_chern_fhs, oracle_eta_spectral, oracle_index_svd,
)
from higher_aps.group_cohomology import builtin_cocycle
from higher_aps.higher_cocycles import tau_c
from higher_aps.projectors import cm_idempotent, cm_idempotent_adjoint, e_one


def slab_scenario(signs=(1, 1), flip=False, **kw):
    spec = ModelSpec(kind="aps_slab", boundary_dim=len(signs), depth=48, interior=2, signs=signs, flip_boundary=flip)
    return Scenario("small_slab", spec, seed=0, n_nodes=32, u_grid=(0.5, 1.0, 2.0), **kw)


def closed_scenario(extra, seed=0):
    spec = ModelSpec(kind="closed_circle", n_sites=6, fiber=2, extra_plus=extra)
    return Scenario("closed", spec, seed=seed, oracles=("svd_index",), as_u_grid=(0.5, 1.0, 2.0))


def qwz_lower_band(mass):
    """Lower band of the two-band Chern insulator h = sin x s_x + sin y s_y + (m + cos x + cos y) s_z."""
    def frame(theta):
        x, y = theta
        h = np.array([[mass + np.cos(x) + np.cos(y), np.sin(x) - 1j * np.sin(y)],
                      [np.sin(x) + 1j * np.sin(y), -(mass + np.cos(x) + np.cos(y))]])
        return np.linalg.eigh(h)[1][:, :1]
    return frame


# --- oracles ---------------------------------------------------------------------------------------


def test_svd_index_oracle():
    assert oracle_index_svd(np.eye(3)) == 0
    assert oracle_index_svd(np.zeros((2, 3))) == 1
    assert oracle_index_svd(np.array([[1.0, 0, 0], [0, 1.0, 0]])) == 1
    with pytest.raises(PreconditionError):
        oracle_index_svd(np.diag([1.0, 1e-8]))


def test_spectral_eta_oracle():
    assert oracle_eta_spectral(np.diag([2.0, -1.0, 0.5])) == 1.0
    with pytest.raises(PreconditionError):
        oracle_eta_spectral(np.diag([1.0, 0.0]))


@pytest.mark.parametrize("mass,expected", [(1.0, 1), (-1.0, 1), (3.0, 0)])
def test_fhs_chern_of_two_band_model(mass, expected):
    for n in (12, 24):
        assert abs(oracle_chern_fhs(qwz_lower_band(mass), n)) == pytest.approx(expected, abs=1e-9)


# --- closed models --------------------------------------------------------------------------------


@pytest.mark.parametrize("extra", [-2, -1, 0, 1, 2])
def test_closed_pairing_equals_svd_index(extra):
    scn = closed_scenario(extra)
    model = build_model(scn.model, np.random.default_rng(scn.seed))
    absolute = higher_index_absolute(scn, 1.0, model).value
    assert absolute == pytest.approx(oracle_index_svd(model.d_plus), abs=1e-9)
    assert higher_index_relative(scn, 1.0, model).value == pytest.approx(absolute, abs=1e-9)


def test_closed_report_passes():
    report = aps_check(closed_scenario(1, seed=4))
    assert report.passed, report.checks
    assert report.oracles["svd_index"] == 1


# --- slab models ---------------------------------------------------------------------------------


@pytest.mark.parametrize("signs", [(1, 1), (1, -1), (1, 1, 1, -1)])
def test_slab_absolute_relative_and_eta(signs):
    scn = slab_scenario(signs)
    model = build_model(scn.model, np.random.default_rng(0))
    absolute = higher_index_absolute(scn, 1.0, model).value
    assert absolute == pytest.approx(sum(signs), abs=1e-8)
    relative = higher_index_relative(scn, 1.0, model, symmetrized=False).value
    assert relative == pytest.approx(absolute, abs=1e-6)
    eta = eta_invariant(scn, model)
    assert eta.value.real == pytest.approx(constant("eta_normalization_kappa").real * sum(signs), abs=1e-7)
    assert abs(eta.value.real - constant("eta_normalization_kappa").real * sum(signs)) < eta.error + 1e-12


def test_eta_flips_with_boundary_orientation():
    eta = eta_invariant(slab_scenario((1, 1, -1))).value.real
    flipped = eta_invariant(slab_scenario((1, 1, -1), flip=True)).value.real
    assert eta == pytest.approx(-flipped, abs=1e-7)


def test_symmetric_boundary_spectrum_has_zero_eta():
    assert abs(eta_invariant(slab_scenario((1, -1, 1, -1))).value) < 1e-7


def test_relative_pairing_same_for_v_and_adjoint():
    scn = slab_scenario((1, 1))
    model = build_model(scn.model, np.random.default_rng(0))
    v = higher_index_relative(scn, 1.0, model, symmetrized=False).value
    vs = higher_index_relative(scn, 1.0, model, symmetrized=False, adjoint=True).value
    assert v == pytest.approx(vs, abs=1e-8)


def test_geometric_term_vanishes_on_lattice_slab():
    scn = slab_scenario((1, -1, 1))
    fit = as_term_extrapolate(scn)
    assert abs(fit.value) < 1e-6 and fit.fit_residual < 1e-6 and not fit.flagged


def test_slab_report_passes_and_matches_schema():
    scn = slab_scenario((1, 1, -1), oracles=("spectral_eta",))
    report = aps_check(scn)
    assert report.passed, report.checks
    schema = json.loads((resources.files("higher_aps") / "data" / "report_schema.json").read_text())
    jsonschema.validate(json.loads(report.to_json()), schema)


def test_eta_needs_cylindrical_end():
    with pytest.raises(PreconditionError):
        eta_invariant(closed_scenario(0))


def test_gap_violation_is_infeasible():
    spec = ModelSpec(kind="aps_slab", boundary_dim=2, depth=48, interior=2, gap=0.9, spectrum=(0.5, 1.2))
    with pytest.raises(InfeasibleError):
        build_model(spec, np.random.default_rng(0))


# --- flux torus ----------------------------------------------------------------------------------


def test_flux_torus_report_passes():
    scn = Scenario("flux", ModelSpec(kind="flux_torus", n=6, flux=1), cocycle="area-on-Z2",
                   oracles=("chern_fhs",), u_grid=(0.7, 1.0), as_u_grid=(0.2, 0.4, 0.8))
    report = aps_check(scn)
    assert report.passed, report.checks
    assert report.values["chern_estimate"] == pytest.approx(round(report.oracles["chern_fhs"]), abs=5e-3)


def test_zero_flux_rejected():
    with pytest.raises(ConfigError):
        build_model(ModelSpec(kind="flux_torus", flux=0), np.random.default_rng(0))


# --- configuration --------------------------------------------------------------------------------


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        Scenario.from_dict({"scenario_id": "x", "colour": 1})
    with pytest.raises(ConfigError):
        Scenario.from_dict({"scenario_id": "x", "model": {"kind": "aps_slab", "depht": 3}})
    with pytest.raises(ConfigError):
        Scenario.from_dict({"model": {}})
    with pytest.raises(ConfigError):
        ModelSpec(kind="sphere")


@settings(max_examples=30)
@given(st.integers(0, 100), st.floats(0.1, 5.0), st.sampled_from(["aps_slab", "closed_circle", "flux_torus"]),
       st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5))
def test_scenario_round_trip(seed, u, kind, grid):
    scn = Scenario.from_dict({"scenario_id": "rt", "seed": seed, "u": u, "model": {"kind": kind},
                              "as_u_grid": grid, "tolerances": {"aps": 1e-3}})
    assert Scenario.from_dict(scn.to_dict()) == scn


def test_v_and_v_adjoint_pair_equally_on_closed_models():
    model = build_model(ModelSpec(kind="closed_circle", n_sites=5, extra_plus=1), np.random.default_rng(2))
    n, m = model.dims
    tau = tau_c(builtin_cocycle("trivial-degree-0"))
    e1 = e_one(n, m).matrix
    v = chern_pair(cm_idempotent(model).matrix, e1, tau)
    vs = chern_pair(cm_idempotent_adjoint(model).matrix, e1, tau)
    assert v == pytest.approx(vs, abs=1e-8)


def test_symmetrized_relative_pairing_is_twice_single():
    scn = slab_scenario((1, -1, 1))
    model = build_model(scn.model, np.random.default_rng(0))
    single = higher_index_relative(scn, 1.0, model, symmetrized=False).value
    half_doubled = higher_index_relative(scn, 1.0, model, symmetrized=True).value
    assert half_doubled == pytest.approx(single, abs=1e-8)
