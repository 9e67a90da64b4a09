"""End-to-end index computations on lattice scenarios.

Three scenario kinds are supported:

* ``closed_circle``: a closed circle lattice with extra orbitals (degree 0, trivial group),
* ``aps_slab``: a slab with a cylindrical end built from a gapped boundary operator (degree 0),
* ``flux_torus``: the lowest Hofstadter band over the twist torus seen as a Z^2-covering,
  paired with the area cocycle (degree 2).

Each pairing is computed along a separate code path so that agreement between them is
meaningful: the absolute index from a true parametrix (slab) or dense heat idempotents
(closed), the relative pairing from the b-trace plus the cylinder transgression, the eta
invariant from a direct batched quadrature over t, and the geometric term from a small-u fit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import Callable

import numpy as np
from scipy import integrate

from .b_trace import b_trace_from_diagonal, default_regularization, site_diagonal
from .cyclic_homology import (RelativeCochain, chern_pair, const_chern, excision_triple, relative_pair,
                              zero_cochain)
from .errors import ConfigError, InfeasibleError, PreconditionError
from .group_cohomology import builtin_cocycle
from .group_core import free_abelian
from .higher_cocycles import EquivariantOperator, relative_cocycle, tau_c
from .lattice_models import (DiracModel, FiberField, SlabGeometry, build_slab_model, circle_defect_model,
                             hofstadter_hamiltonian, lowest_band_projector, random_boundary,
                             random_interior_perturbation, scheme_fiber_dim)
from .projectors import (Spectra, TAIL_TOL, cm_idempotent, cm_idempotent_adjoint, cylinder_fibers,
                         cylinder_idempotent, e_one, relative_triple, tail_time, true_parametrix)

SCHEMA_VERSION = 1
MODEL_KINDS = ("closed_circle", "aps_slab", "flux_torus")
SVD_AMBIGUITY = 1e3  # singular values within this factor of the threshold are ambiguous
REPORT_DIGITS = 12


# --- configuration -----------------------------------------------------------------------------------


def _from_dict(cls, data: dict | None, where: str):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")
    return cls(**data)


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "aps_slab"
    # slab with cylindrical end
    boundary_dim: int = 16
    depth: int = 64
    interior: int = 4
    scheme: str = "balanced"
    gap: float = 0.5
    spectrum: tuple = (0.8, 1.2)
    signs: tuple | None = None
    flip_boundary: bool = False
    interior_strength: float = 0.5
    margin: int = 20
    # closed circle
    n_sites: int = 8
    fiber: int = 2
    extra_plus: int = 0
    # flux torus
    n: int = 6
    flux: int = 1
    n_theta: int = 16
    coupling: float = 0.5
    block_tol: float = 1e-14

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}")
        object.__setattr__(self, "spectrum", tuple(self.spectrum))
        if self.signs is not None:
            object.__setattr__(self, "signs", tuple(self.signs))


@dataclass(frozen=True)
class QuadratureSpec:
    path_tol: float = 1e-9
    path_n0: int = 16
    path_max_level: int = 8
    tail_tol: float = TAIL_TOL
    eta_tol: float = 1e-11
    t_min: float = 1e-3
    t_min_levels: int = 3


@dataclass(frozen=True)
class Tolerances:
    svd_index: float = 1e-8
    absolute_relative: float = 1e-6
    u_drift: float = 1e-6
    aps: float = 1e-4
    eta_kappa: float = 1e-4
    as_fit: float = 1e-6
    chern_ratio: float = 5e-3
    v_vs_vstar: float = 1e-8


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    model: ModelSpec = field(default_factory=ModelSpec)
    cocycle: str = "trivial-degree-0"
    cocycle_params: dict = field(default_factory=dict)
    seed: int = 0
    u: float = 1.0
    u_grid: tuple = (0.5, 1.0, 2.0, 4.0)
    as_u_grid: tuple = (0.01, 0.02, 0.04, 0.08, 0.16)
    n_nodes: int = 64
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    oracles: tuple = ()
    relative: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown} in scenario")
        if "scenario_id" not in data:
            raise ConfigError("scenario needs a scenario_id")
        data["model"] = _from_dict(ModelSpec, data.get("model"), "model")
        data["quadrature"] = _from_dict(QuadratureSpec, data.get("quadrature"), "quadrature")
        data["tolerances"] = _from_dict(Tolerances, data.get("tolerances"), "tolerances")
        for key in ("u_grid", "as_u_grid", "oracles"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


# --- constants -------------------------------------------------------------------------------------


def constants_path():
    return resources.files("higher_aps") / "data" / "constants.json"


def load_constants() -> dict:
    with resources.as_file(constants_path()) as p:
        return json.loads(p.read_text())


def constant(name: str) -> complex:
    entry = load_constants()["constants"][name]
    return complex(entry["value"], entry.get("value_imag", 0.0))


# --- models ----------------------------------------------------------------------------------------


def build_model(spec: ModelSpec, rng: np.random.Generator):
    if spec.kind == "closed_circle":
        return circle_defect_model(spec.n_sites, spec.fiber, spec.extra_plus, rng)
    if spec.kind == "aps_slab":
        low, high = spec.spectrum
        B = random_boundary(spec.boundary_dim, rng, low, high, signs=spec.signs, real=True)
        if spec.flip_boundary:
            B = -B
        geom = SlabGeometry(spec.depth, spec.interior, scheme_fiber_dim(spec.boundary_dim, spec.scheme))
        pert = random_interior_perturbation(geom, rng, spec.interior_strength, real=True)
        model = build_slab_model(B, geom, spec.scheme, pert, spec.gap)
        model.require_gap()
        return model
    return FluxTorusModel.build(spec, rng)


@dataclass
class FluxTorusModel:
    """Lowest Hofstadter band P_theta over the twist torus, as a Z^2-equivariant operator.

    H^+ = C^{n^2}, H^- = C^flux, D^+(theta) = W P_theta with W a random constant coupling
    (a theta-dependent W with near-degenerate twists slows the Fourier decay of V).  The heat
    idempotent V of D, minus diag(1 - P_theta, 0), is an idempotent whose class is
    [P] - [C^flux]; its Fourier blocks give the operator on l^2(Z^2).
    """

    n: int
    flux: int
    n_theta: int
    w_blocks: dict
    block_tol: float
    projectors: np.ndarray  # (n_theta, n_theta, n^2, n^2)
    band_gap: float

    @classmethod
    def build(cls, spec: ModelSpec, rng: np.random.Generator) -> "FluxTorusModel":
        if spec.flux < 1:
            raise ConfigError("flux torus needs flux >= 1 so that the lowest band is gapped")
        N, dim = spec.n_theta, spec.n * spec.n
        th = 2 * np.pi * np.arange(N) / N
        P = np.empty((N, N, dim, dim), dtype=complex)
        gap = np.inf
        for a, x in enumerate(th):
            for b, y in enumerate(th):
                P[a, b], g = lowest_band_projector(spec.n, spec.flux, (x, y))
                gap = min(gap, g)
        if gap < 1e-3:
            raise InfeasibleError(f"lowest band is not gapped on the twist grid (gap {gap:.3g})")
        W = {(0, 0): spec.coupling * (rng.normal(size=(spec.flux, dim)) + 1j * rng.normal(size=(spec.flux, dim)))
             / np.sqrt(2 * dim)}
        return cls(spec.n, spec.flux, N, W, spec.block_tol, P, float(gap))

    @property
    def group(self):
        return free_abelian(2)

    def d_plus_fibers(self) -> np.ndarray:
        N = self.n_theta
        th = 2 * np.pi * np.arange(N) / N
        W = np.zeros((N, N) + next(iter(self.w_blocks.values())).shape, dtype=complex)
        for (g1, g2), blk in self.w_blocks.items():
            W += np.exp(1j * (th[:, None] * g1 + th[None, :] * g2))[:, :, None, None] * blk
        return W @ self.projectors

    def idempotent_fibers(self, u: float) -> np.ndarray:
        N, dim = self.n_theta, self.n * self.n
        V = cm_idempotent(self.d_plus_fibers().reshape(N * N, self.flux, dim), u).matrix
        V = V.reshape(N, N, dim + self.flux, dim + self.flux).copy()
        V[..., :dim, :dim] -= np.eye(dim) - self.projectors
        return V

    def blocks_from_fibers(self, fibers: np.ndarray) -> dict:
        """a(g) = N^-2 sum_theta a(theta) exp(-i theta.g) for |g_i| < N/2, dropping blocks below block_tol."""
        N = self.n_theta
        coeff = np.fft.fft2(fibers, axes=(0, 1)) / (N * N)
        out = {}
        half = N // 2
        for k1 in range(-half + 1, half):
            for k2 in range(-half + 1, half):
                blk = coeff[k1 % N, k2 % N]
                if np.max(np.abs(blk)) > self.block_tol:
                    out[(k1, k2)] = blk
        return out

    def idempotent(self, u: float) -> EquivariantOperator:
        return EquivariantOperator(self.group, self.blocks_from_fibers(self.idempotent_fibers(u)), "J")

    def e_one(self) -> EquivariantOperator:
        dim = self.n * self.n
        return EquivariantOperator(self.group, {(0, 0): e_one(dim, self.flux).matrix}, "J")

    def aliasing_tail(self, u: float) -> float:
        """Largest block on the outer Fourier shell |g|_inf = N/2 - 1."""
        N = self.n_theta
        coeff = np.fft.fft2(self.idempotent_fibers(u), axes=(0, 1)) / (N * N)
        h = N // 2 - 1
        shell = [coeff[i % N, j % N] for i in range(-h, h + 1) for j in range(-h, h + 1) if max(abs(i), abs(j)) == h]
        return float(max(np.max(np.abs(b)) for b in shell))

    def band_frame(self, theta) -> np.ndarray:
        w, U = np.linalg.eigh(hofstadter_hamiltonian(self.n, self.flux, theta))
        return U[:, :self.flux]


# --- oracles ---------------------------------------------------------------------------------------------


def oracle_index_svd(d_plus: np.ndarray, rel_threshold: float = 1e-8) -> int:
    """dim ker D^+ - dim ker D^- by singular-value thresholding."""
    d_plus = np.asarray(d_plus)
    s = np.linalg.svd(d_plus, compute_uv=False)
    scale = max(float(s[0]) if s.size else 0.0, 1.0)
    thr = rel_threshold * scale
    ambiguous = s[(s > thr / SVD_AMBIGUITY) & (s < thr * SVD_AMBIGUITY)]
    if ambiguous.size:
        raise PreconditionError(f"singular values {ambiguous} are too close to the kernel threshold; "
                                "perturb the model")
    rank = int(np.sum(s > thr))
    m, n = d_plus.shape
    return (n - rank) - (m - rank)


def oracle_eta_spectral(boundary: np.ndarray) -> float:
    """sum_j sign(lambda_j) of a gapped self-adjoint boundary operator."""
    ev = np.linalg.eigvalsh(np.asarray(boundary))
    if np.min(np.abs(ev)) < 1e-12:
        raise PreconditionError("boundary operator has a zero eigenvalue")
    return float(np.sum(np.sign(ev)))


def oracle_chern_fhs(frame: Callable, n_grid: int) -> float:
    """Lattice Chern number of the bundle spanned by frame(theta) by the plaquette method.

    Link variables U_mu = det(F(theta)^* F(theta + e_mu)) / |.|; the plaquette phase is the
    argument of U_1 U_2(+e_1) / (U_1(+e_2) U_2), summed over the n_grid^2 plaquettes / 2 pi.
    """
    th = 2 * np.pi * np.arange(n_grid) / n_grid
    F = [[frame((a, b)) for b in th] for a in th]

    def link(a, b, da, db):
        z = np.linalg.det(F[a][b].conj().T @ F[(a + da) % n_grid][(b + db) % n_grid])
        if abs(z) < 1e-12:
            raise PreconditionError("degenerate link variable; refine the plaquette grid")
        return z / abs(z)

    total = 0.0
    for a in range(n_grid):
        for b in range(n_grid):
            plaq = link(a, b, 1, 0) * link((a + 1) % n_grid, b, 0, 1) / (link(a, (b + 1) % n_grid, 1, 0) * link(a, b, 0, 1))
            total += np.angle(plaq)
    return total / (2 * np.pi)


# --- pairings -----------------------------------------------------------------------------------------


@dataclass
class PairingValue:
    value: complex
    error: float | str  # numeric estimate or "exact"
    details: dict = field(default_factory=dict)


def _cocycle(scn: Scenario):
    return builtin_cocycle(scn.cocycle, scn.cocycle_params)


def _model_cache(scn: Scenario, model=None):
    return model if model is not None else build_model(scn.model, np.random.default_rng(scn.seed))


def higher_index_absolute(scn: Scenario, u: float | None = None, model=None, spectra: Spectra | None = None
                          ) -> PairingValue:
    u = scn.u if u is None else u
    model = _model_cache(scn, model)
    c = _cocycle(scn)
    if isinstance(model, FluxTorusModel):
        V = model.idempotent(u)
        val = chern_pair(V, model.e_one(), tau_c(c), check=True)
        return PairingValue(complex(val), model.aliasing_tail(u), {"blocks": len(V.blocks)})
    if c.degree != 0:
        raise PreconditionError("lattice models without a group action pair with degree-0 cocycles only")
    if model.geometry is None:
        V = cm_idempotent(model, u)
        n, m = model.dims
        val = chern_pair(V.matrix, e_one(n, m).matrix, tau_c(c), check=True)
        return PairingValue(complex(val), "exact")
    # b-model: the Connes-Skandalis projector of a true parametrix lies in the residual ideal,
    # and tau(P_Q) - tau(e1) = Tr S_+^2 - Tr S_-^2.
    tp = true_parametrix(model, u, spectra=spectra)
    geom = model.geometry
    val = tp.window_trace(tp.s_plus @ tp.s_plus, geom) - tp.window_trace(tp.s_minus @ tp.s_minus, geom)
    return PairingValue(complex(val), "exact", {"epsilon_plus": tp.epsilon_plus, "epsilon_minus": tp.epsilon_minus,
                                                "warnings": list(tp.warnings)})


def higher_index_relative(scn: Scenario, u: float | None = None, model=None, symmetrized: bool = True,
                          adjoint: bool = False, spectra: Spectra | None = None) -> PairingValue:
    """1/2 <[V (+) V*, e1 (+) e1, p_t], (tau^r_c, sigma_c)> (or the pairing of V or V* alone)."""
    u = scn.u if u is None else u
    model = _model_cache(scn, model)
    c = _cocycle(scn)
    q = scn.quadrature
    if isinstance(model, FluxTorusModel) or model.geometry is None:
        # closed model: the constant path, so the relative class is the excised absolute one
        if isinstance(model, FluxTorusModel):
            P, Q, tau = model.idempotent(u), model.e_one(), tau_c(c)
        else:
            n, m = model.dims
            P, Q, tau = cm_idempotent(model, u).matrix, e_one(n, m).matrix, tau_c(c)
        r = RelativeCochain.homogeneous(tau, zero_cochain(c.degree + 1), lambda x: x)
        res = relative_pair(excision_triple(P, Q), r)
        return PairingValue(complex(res.value), "exact", {"path": "constant"})
    reg = default_regularization(model.geometry, scn.model.margin)
    triple = relative_triple(model, u, scn.n_nodes, symmetrized, q.tail_tol, adjoint=adjoint, spectra=spectra)
    r = relative_cocycle(c, reg, scn.n_nodes)
    res = relative_pair(triple, r, quad=dict(tol=q.path_tol, n0=q.path_n0, max_level=q.path_max_level))
    scale = 0.5 if symmetrized else 1.0
    return PairingValue(complex(scale * res.value), scale * res.error + q.tail_tol,
                        {"converged": res.converged, "nodes": res.nodes, "warnings": res.warnings,
                         "endpoint_residual": float(max(triple.endpoint_residuals))})


# --- eta invariant ----------------------------------------------------------------------------------


def _eta_integrand(fibers: np.ndarray, t: float) -> complex:
    """-(i/2pi) circle-int tr(p d/dlam [p', p]) for p = V_{tD_cyl} (+) V*_{tD_cyl}, computed
    blockwise (the direct sum splits the trace)."""
    total = 0.0 + 0.0j
    for adjoint in (False, True):
        f = cm_idempotent_adjoint if adjoint else cm_idempotent
        V = f(fibers, t, derivative=True)
        p, dp = V.matrix, V.derivative
        com = FiberField(dp @ p - p @ dp).lam_derivative().values
        total += -1j / (2 * np.pi) * 2 * np.pi * np.mean(np.einsum("nij,nji->n", p, com))
    return complex(total)


def _integrate_log(f: Callable[[float], complex], a: float, b: float, tol: float) -> tuple[float, float, float]:
    """int_a^b f(t) dt in x = log t; returns (real value, error estimate, max |imag part|)."""
    imag = [0.0]

    def g(x):
        t = math.exp(x)
        v = f(t)
        imag[0] = max(imag[0], abs(v.imag))
        return v.real * t

    val, err = integrate.quad(g, math.log(a), math.log(b), epsabs=tol, epsrel=tol, limit=400)
    return float(val), float(err), imag[0]


def eta_invariant(scn: Scenario, model=None) -> PairingValue:
    """const_0 int_0^infty sigma(p_t, [p_t', p_t]) dt along the rescaled cylinder path.

    The t-range is split at t_min (geometric halving, Richardson extrapolation t_min -> 0
    with the order read off the sequence) and at the tail time T where V_{tD_cyl} = e1
    to ``tail_tol``.
    """
    model = _model_cache(scn, model)
    c = _cocycle(scn)
    if isinstance(model, FluxTorusModel) or model.geometry is None:
        raise PreconditionError("the eta invariant needs a model with a cylindrical end")
    if c.degree != 0:
        raise PreconditionError("eta quadrature is implemented for degree-0 cocycles on slab models")
    model.require_gap()
    q = scn.quadrature
    fibers = cylinder_fibers(model, scn.n_nodes)
    T = tail_time(fibers, 1.0, q.tail_tol)
    f = lambda t: _eta_integrand(fibers, t)
    seq, errs, imag = [], [], 0.0
    t_min = q.t_min
    head, herr, him = _integrate_log(f, t_min, T, q.eta_tol)
    imag = him
    seq.append(head)
    errs.append(herr)
    lo = t_min
    for _ in range(q.t_min_levels - 1):
        piece, perr, pim = _integrate_log(f, lo / 2, lo, q.eta_tol)
        lo /= 2
        seq.append(seq[-1] + piece)
        errs.append(perr)
        imag = max(imag, pim)
    warnings = []
    value, extrap_err, order = seq[-1], 0.0, None
    if len(seq) >= 3:
        d1, d2 = seq[-2] - seq[-3], seq[-1] - seq[-2]
        if abs(d2) > 1e-15 and abs(d1) > 1e-15:
            ratio = d1 / d2
            if ratio > 1.0:
                order = math.log2(ratio)
                value = seq[-1] + d2 / (ratio - 1.0)
                extrap_err = abs(d2 / (ratio - 1.0))
            else:
                warnings.append("t_min sequence not monotone; error bar widened")
                extrap_err = 10 * abs(d2)
        else:
            extrap_err = abs(d2)
    value *= const_chern(0)
    # aliasing of the lambda grid is worst at the far end of the path, where the fibers are least smooth
    aliasing = max(FiberField(cylinder_idempotent(fibers, t).matrix).fourier_tail() for t in (1.0, T))
    err = extrap_err + sum(errs) + q.tail_tol + aliasing
    return PairingValue(complex(value), err, {"t_min_sequence": seq, "order": order, "tail_time": T,
                                              "imag_max": imag, "aliasing": aliasing, "warnings": warnings})


# --- geometric term -----------------------------------------------------------------------------------


@dataclass
class ExtrapolationResult:
    value: float
    fit_residual: float
    u_grid: tuple
    samples: tuple
    coefficients: tuple
    flagged: bool


def _heat_diagonal(w: np.ndarray, U: np.ndarray, u: float) -> np.ndarray:
    """Diagonal of exp(-u^2 M) from an eigendecomposition M = U diag(w) U^* (batched)."""
    return np.einsum("...ik,...k->...i", np.abs(U) ** 2, np.exp(-u * u * w))


def _small_u_samples(scn: Scenario, model, spectra: Spectra | None) -> list:
    """Degree 0: bTr(V_u) - bTr(e1).  Only the diagonal enters, and the diagonal blocks of V
    and V* agree (exp(-u^2 X) and 1 - exp(-u^2 Y)), so the symmetrized value is the same."""
    c = _cocycle(scn)
    if isinstance(model, FluxTorusModel):
        return [higher_index_absolute(scn, u, model).value.real for u in scn.as_u_grid]
    if c.degree != 0:
        raise PreconditionError("small-u b-trace fit is implemented for degree-0 cocycles")
    if model.geometry is None:
        return [higher_index_absolute(scn, u, model).value.real for u in scn.as_u_grid]
    geom = model.geometry
    reg = default_regularization(geom, scn.model.margin)
    spectra = spectra or Spectra.of(model)
    fibers = cylinder_fibers(model, scn.n_nodes)
    fx, fux = np.linalg.eigh(np.conj(np.swapaxes(fibers, -1, -2)) @ fibers)
    fy, fuy = np.linalg.eigh(fibers @ np.conj(np.swapaxes(fibers, -1, -2)))
    n_minus = model.dims[1]
    e1_diag = np.r_[np.zeros(model.dims[0]), np.ones(n_minus)]
    e1_bt = b_trace_from_diagonal(site_diagonal(np.diag(e1_diag), geom, 2), complex(geom.fiber), reg)
    out = []
    for u in scn.as_u_grid:
        diag = np.r_[_heat_diagonal(spectra.w_x, spectra.u_x, u), 1.0 - _heat_diagonal(spectra.w_y, spectra.u_y, u)]
        p_inf = float(np.mean(np.sum(_heat_diagonal(fx, fux, u), axis=-1)
                              + np.sum(1.0 - _heat_diagonal(fy, fuy, u), axis=-1)))
        bt = b_trace_from_diagonal(site_diagonal(np.diag(diag), geom, 2), p_inf, reg)
        out.append(float(np.real(bt - e1_bt)))
    return out


def as_term_extrapolate(scn: Scenario, model=None, spectra: Spectra | None = None,
                        degree: int | None = None) -> ExtrapolationResult:
    """Polynomial fit of the paired idempotent's regularized trace on a small-u grid,
    evaluated at u = 0.  The heat idempotents depend on u through u^2 only, so the model is
    a polynomial in u^2 of degree len(grid) - 2 (one spare point measures the fit)."""
    model = _model_cache(scn, model)
    us = np.asarray(scn.as_u_grid, dtype=float)
    vals = np.asarray(_small_u_samples(scn, model, spectra))
    deg = degree if degree is not None else max(1, len(us) - 2)
    coef = np.polynomial.polynomial.polyfit(us ** 2, vals, deg)
    resid = float(np.max(np.abs(np.polynomial.polynomial.polyval(us ** 2, coef) - vals)))
    return ExtrapolationResult(float(coef[0]), resid, tuple(us), tuple(vals), tuple(coef),
                               resid > scn.tolerances.as_fit)


# --- report --------------------------------------------------------------------------------------------


@dataclass
class IndexReport:
    scenario_id: str
    values: dict
    errors: dict
    oracles: dict
    checks: list
    constants_version: str
    provenance: dict
    sweep: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json_dict(self) -> dict:
        return _rounded({"scenario_id": self.scenario_id, "values": self.values, "errors": self.errors,
                         "oracles": self.oracles, "pass": self.checks, "constants_version": self.constants_version,
                         "provenance": self.provenance, "sweep": self.sweep})

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def _round(x: float) -> float:
    if x == 0 or not math.isfinite(x):
        return float(x)
    return float(f"{x:.{REPORT_DIGITS}g}")


def _rounded(obj):
    if isinstance(obj, dict):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return _round(float(np.real(obj)))
    return obj


def _check(rule: str, residual: float, tol: float) -> dict:
    return {"rule": rule, "residual": float(residual), "tolerance": float(tol), "passed": bool(residual < tol)}


def aps_check(scn: Scenario, model=None) -> IndexReport:
    """Absolute, relative, eta and geometric term on one scenario, with the index-formula residual
    |Ind - (AS - eta / 2)| and the oracle comparisons."""
    model = _model_cache(scn, model)
    tol = scn.tolerances
    consts = load_constants()
    c = _cocycle(scn)
    values, errors, oracles, checks, prov = {}, {}, {}, [], {}
    spectra = Spectra.of(model) if isinstance(model, DiracModel) and model.geometry is not None else None

    sweep = []
    for u in scn.u_grid:
        pv = higher_index_absolute(scn, u, model, spectra=spectra)
        sweep.append({"u": u, "pairing": pv.value.real, "pairing_imag": pv.value.imag})
    absolute = higher_index_absolute(scn, scn.u, model, spectra=spectra)
    values["absolute"] = absolute.value.real
    values["absolute_imag"] = absolute.value.imag
    errors["absolute"] = absolute.error
    drift = max(abs(complex(s["pairing"], s["pairing_imag"]) - absolute.value) for s in sweep) if sweep else 0.0
    checks.append(_check("u_independence", drift, tol.u_drift))

    if scn.relative:
        relative = higher_index_relative(scn, scn.u, model, spectra=spectra)
        values["relative"] = relative.value.real
        values["relative_imag"] = relative.value.imag
        errors["relative"] = relative.error
        checks.append(_check("absolute_equals_relative", abs(relative.value - absolute.value), tol.absolute_relative))

    as_fit = as_term_extrapolate(scn, model, spectra)
    values["as_term"] = as_fit.value
    errors["as_term"] = as_fit.fit_residual
    checks.append(_check("as_fit_residual", as_fit.fit_residual, tol.as_fit))

    is_slab = isinstance(model, DiracModel) and model.geometry is not None
    if is_slab:
        eta = eta_invariant(scn, model)
        values["eta"] = eta.value.real
        errors["eta"] = eta.error
        eta_val = eta.value.real
    else:
        values["eta"] = 0.0
        errors["eta"] = "exact"
        eta_val = 0.0
    aps_res = abs(absolute.value.real - (as_fit.value - 0.5 * eta_val))
    values["aps_residual"] = aps_res
    checks.append(_check("aps_formula", aps_res, tol.aps))

    if "svd_index" in scn.oracles and isinstance(model, DiracModel):
        if model.geometry is not None:
            raise PreconditionError("the SVD oracle applies to closed models")
        idx = oracle_index_svd(model.d_plus)
        oracles["svd_index"] = idx
        checks.append(_check("svd_index", abs(absolute.value - idx), tol.svd_index))
    if "spectral_eta" in scn.oracles and is_slab:
        sgn = oracle_eta_spectral(model.boundary)
        kappa = consts["constants"]["eta_normalization_kappa"]["value"]
        prov["eta_normalization_kappa"] = consts["constants"]["eta_normalization_kappa"]["source"]
        oracles["spectral_eta"] = sgn
        oracles["kappa_times_spectral_eta"] = kappa * sgn
        checks.append(_check("eta_vs_spectral", abs(eta_val - kappa * sgn), tol.eta_kappa))
    if "chern_fhs" in scn.oracles and isinstance(model, FluxTorusModel):
        ch = oracle_chern_fhs(model.band_frame, model.n_theta)
        ch2 = oracle_chern_fhs(model.band_frame, 2 * model.n_theta)
        entry = consts["constants"]["degree2_chern_ratio"]
        ratio_const = complex(entry["value"], entry["value_imag"])
        prov["degree2_chern_ratio"] = consts["constants"]["degree2_chern_ratio"]["source"]
        oracles["chern_fhs"] = ch
        oracles["chern_fhs_refined"] = ch2
        ratio = absolute.value / round(ch)
        estimate = absolute.value / ratio_const
        values["chern_ratio"] = ratio.real
        values["chern_ratio_imag"] = ratio.imag
        values["chern_estimate"] = estimate.real
        values["chern_estimate_imag"] = estimate.imag
        checks.append(_check("fhs_resolution_agreement", abs(ch - ch2), 1e-6))
        checks.append(_check("chern_ratio_vs_frozen", abs(ratio / ratio_const - 1.0), tol.chern_ratio))
    prov["cocycle"] = c.name
    prov["model_kind"] = scn.model.kind
    return IndexReport(scn.scenario_id, values, errors, oracles, checks, consts["version"], prov, sweep)


# --- calibration -------------------------------------------------------------------------------------------


KAPPA_SCENARIO = Scenario("calibration_kappa", ModelSpec(kind="aps_slab"), seed=0)
CHERN_SCENARIO = Scenario("calibration_chern", ModelSpec(kind="flux_torus", n=6, flux=1),
                          cocycle="area-on-Z2", seed=0)


def calibrate_constants() -> dict:
    """Measure the two normalization constants on their calibration scenarios."""
    model = build_model(KAPPA_SCENARIO.model, np.random.default_rng(KAPPA_SCENARIO.seed))
    eta = eta_invariant(KAPPA_SCENARIO, model).value.real
    kappa = eta / oracle_eta_spectral(model.boundary)
    torus = build_model(CHERN_SCENARIO.model, np.random.default_rng(CHERN_SCENARIO.seed))
    pairing = higher_index_absolute(CHERN_SCENARIO, 1.0, torus).value
    chern = round(oracle_chern_fhs(torus.band_frame, torus.n_theta))
    ratio = pairing / chern
    return {
        "eta_normalization_kappa": {"value": kappa, "source": KAPPA_SCENARIO.scenario_id},
        "degree2_chern_ratio": {"value": ratio.real, "value_imag": ratio.imag, "source": CHERN_SCENARIO.scenario_id},
    }


def eta_integrand_table(scn: Scenario, model=None, n_points: int = 33) -> list[tuple[float, float]]:
    """(t, sigma(p_t, [p_t', p_t])) on a geometric grid from t_min to the tail time, for plotting."""
    model = _model_cache(scn, model)
    if isinstance(model, FluxTorusModel) or model.geometry is None:
        return []
    fibers = cylinder_fibers(model, scn.n_nodes)
    T = tail_time(fibers, 1.0, scn.quadrature.tail_tol)
    ts = np.geomspace(scn.quadrature.t_min, T, n_points)
    return [(float(t), _eta_integrand(fibers, float(t)).real) for t in ts]
