"""Heat-built idempotents of a graded operator D = [[0, D^-], [D^+, 0]].

Every construction takes D^+ as an array of shape (..., m, n): a single dense matrix for the
slab and closed models, or a stack of fibers D^+(lam_j) for translation-invariant cylinder
operators.  Analytic functions of X = D^- D^+ and Y = D^+ D^- are applied through batched
eigendecompositions.

Block layout of every super-idempotent: H^+ first (n rows), then H^- (m rows).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cyclic_homology import IdempotentPath, RelativeKTriple, excision_triple
from .errors import ConvergenceError, IdempotencyError, PreconditionError
from .lattice_models import (DiracModel, FiberField, SlabGeometry, build_cylinder_dirac, fit_decay,
                             fibers_to_kernel, invariant_matrix, scheme_decay_cap)

PSD_TOL = 1e-12
IDEMPOTENT_DENSE_TOL = 1e-10
IDEMPOTENT_FIBER_TOL = 1e-9
CS_ABORT = 1e-6
TAIL_TOL = 1e-9

# Taylor expansions are used below this argument.  The bare series threshold 1e-6 is enough
# for f itself, but f' loses ~|log10 x|*2 digits to cancellation, so both switch at 0.5.
SERIES_CUTOFF = 0.5
_SERIES_TERMS = 18


# --- scalar functions -------------------------------------------------------------------------


def f_ratio(x):
    """f(x) = (1 - e^{-x})/x with f(0) = 1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    out = np.empty_like(x)
    xs = x[small]
    out[small] = sum((-xs) ** k / math.factorial(k + 1) for k in range(_SERIES_TERMS))
    xl = x[~small]
    out[~small] = -np.expm1(-xl) / xl
    return out


def f_ratio_deriv(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    out = np.empty_like(x)
    xs = x[small]
    out[small] = sum(k * (-1) ** k * xs ** (k - 1) / math.factorial(k + 1) for k in range(1, _SERIES_TERMS))
    xl = x[~small]
    out[~small] = (np.exp(-xl) * (1 + xl) - 1) / xl ** 2
    return out


def half_ratio(x):
    """g(x) = (1 - e^{-x/2})/x, so that g(X) X = 1 - e^{-X/2}."""
    return 0.5 * f_ratio(np.asarray(x, dtype=float) / 2)


def _g_power(x, a):
    """e^{-x/2} f(x)^a and its derivative in x."""
    f, fp = f_ratio(x), f_ratio_deriv(x)
    e = np.exp(-x / 2)
    val = e * f ** a
    der = e * (-0.5 * f ** a + (a * f ** (a - 1) * fp if a else 0.0))
    return val, der


# --- batched spectral calculus -------------------------------------------------------------------


def _adj(M):
    return np.conj(np.swapaxes(M, -1, -2))


def _eigh_psd(M, what: str):
    M = 0.5 * (M + _adj(M))
    if np.iscomplexobj(M) and not np.any(M.imag):
        M = M.real  # real symmetric eigensolvers are several times faster
    w, U = np.linalg.eigh(M)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if np.min(w, initial=0.0) < -PSD_TOL * scale:
        raise PreconditionError(f"{what} has a negative eigenvalue {np.min(w):.3g}; not positive semidefinite")
    return np.clip(w, 0.0, None), U


def _apply(U, vals):
    return (U * vals[..., None, :]) @ _adj(U)


def _dplus_of(D) -> np.ndarray:
    if isinstance(D, DiracModel):
        return D.d_plus
    return np.asarray(D, dtype=complex)


@dataclass(frozen=True)
class Spectra:
    """Eigendecompositions of X = D^-D^+ and Y = D^+D^- for the unscaled D^+.

    Scaling D by u only rescales the eigenvalues, so one Spectra serves a whole u-sweep.
    """

    d_plus: np.ndarray
    w_x: np.ndarray
    u_x: np.ndarray
    w_y: np.ndarray | None
    u_y: np.ndarray | None

    @classmethod
    def of(cls, D, with_y: bool = True) -> "Spectra":
        dp = _dplus_of(D)
        if not np.any(dp.imag):
            dp = np.ascontiguousarray(dp.real)
        wA, UA = _eigh_psd(_adj(dp) @ dp, "D^-D^+")
        wB, UB = _eigh_psd(dp @ _adj(dp), "D^+D^-") if with_y else (None, None)
        return cls(dp, wA, UA, wB, UB)


def _spectra(D, spectra: Spectra | None, with_y: bool = True) -> Spectra:
    if spectra is not None:
        if with_y and spectra.w_y is None:
            raise PreconditionError("these spectra lack the D^+D^- decomposition")
        return spectra
    return Spectra.of(D, with_y)


def _assemble(ul, ur, ll, lr):
    top = np.concatenate([ul, ur], axis=-1)
    bottom = np.concatenate([ll, lr], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def heat_operator(D, u: float) -> np.ndarray:
    """e^{-u D^2}.  ``D`` is either a DiracModel (block-diagonal result) or a Hermitian array."""
    if u <= 0:
        raise PreconditionError("heat time u must be positive")
    if isinstance(D, DiracModel):
        dp = D.d_plus
        wX, UX = _eigh_psd(_adj(dp) @ dp, "D^-D^+")
        wY, UY = _eigh_psd(dp @ _adj(dp), "D^+D^-")
        n, m = dp.shape[-1], dp.shape[-2]
        zero_nm = np.zeros(dp.shape[:-2] + (n, m), dtype=complex)
        H = _assemble(_apply(UX, np.exp(-u * wX)), zero_nm, _adj(zero_nm), _apply(UY, np.exp(-u * wY)))
    else:
        A = np.asarray(D, dtype=complex)
        w, U = np.linalg.eigh(0.5 * (A + _adj(A)))
        H = _apply(U, np.exp(-u * w ** 2))
    if not np.all(np.isfinite(H)):
        raise ConvergenceError(f"heat operator overflowed at u={u:g}; use u well below 700/|D|^2")
    return H


# --- super-idempotents ---------------------------------------------------------------------------


@dataclass
class SuperIdempotent:
    """A 2x2 block idempotent (possibly a stack of fibers) with its diagnostics."""

    matrix: np.ndarray
    n_plus: int
    name: str = ""
    derivative: np.ndarray | None = None

    @property
    def blocks(self):
        n = self.n_plus
        M = self.matrix
        return M[..., :n, :n], M[..., :n, n:], M[..., n:, :n], M[..., n:, n:]

    def idempotency_residual(self) -> float:
        return float(np.max(np.abs(self.matrix @ self.matrix - self.matrix)))

    def adjointness_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - _adj(self.matrix))))

    def adjoint(self) -> "SuperIdempotent":
        d = None if self.derivative is None else _adj(self.derivative)
        return SuperIdempotent(_adj(self.matrix), self.n_plus, f"{self.name}*", d)

    def certify(self, tol: float) -> float:
        res = self.idempotency_residual()
        if res > tol:
            raise IdempotencyError(f"{self.name or 'idempotent'} residual {res:.3g} exceeds {tol:g}")
        return res


def _heat_family(dplus, u: float, up_power: float, low_power: float, name: str,
                 derivative: bool = False, spectra: Spectra | None = None) -> SuperIdempotent:
    """[[e^{-X}, e^{-X/2} f(X)^a uD^-], [e^{-Y/2} f(Y)^b uD^+, 1 - e^{-Y}]], X = u^2 D^-D^+.

    With ``derivative`` the exact d/du of every block is attached.
    """
    if u <= 0:
        raise PreconditionError("scale u must be positive")
    sp = _spectra(dplus, spectra)
    dp = sp.d_plus
    dm = _adj(dp)
    wA, UA, wB, UB = sp.w_x, sp.u_x, sp.w_y, sp.u_y
    xA, xB = u * u * wA, u * u * wB
    gA, gA_der = _g_power(xA, up_power)
    gB, gB_der = _g_power(xB, low_power)
    eA, eB = np.exp(-xA), np.exp(-xB)
    m = dp.shape[-2]
    eye_m = np.eye(m)
    V = _assemble(_apply(UA, eA), _apply(UA, gA) @ (u * dm), _apply(UB, gB) @ (u * dp), eye_m - _apply(UB, eB))
    dV = None
    if derivative:
        dV = _assemble(_apply(UA, -2 * u * wA * eA),
                       _apply(UA, 2 * u * u * wA * gA_der + gA) @ dm,
                       _apply(UB, 2 * u * u * wB * gB_der + gB) @ dp,
                       _apply(UB, 2 * u * wB * eB))
    if not np.all(np.isfinite(V)):
        raise ConvergenceError(f"{name} overflowed at u={u:g}")
    return SuperIdempotent(V, dp.shape[-1], name, dV)


def cm_idempotent(D, u: float = 1.0, derivative: bool = False, spectra: Spectra | None = None
                  ) -> SuperIdempotent:
    """Connes-Moscovici idempotent V_{uD}."""
    return _heat_family(D, u, 1.0, 0.0, "V", derivative, spectra)


def cm_idempotent_adjoint(D, u: float = 1.0, derivative: bool = False, spectra: Spectra | None = None
                          ) -> SuperIdempotent:
    return _heat_family(D, u, 0.0, 1.0, "V*", derivative, spectra)


def wassermann(D, u: float = 1.0, derivative: bool = False) -> SuperIdempotent:
    """Self-adjoint member of the homotopy: f^{1/2} in both corners."""
    return _heat_family(D, u, 0.5, 0.5, "W", derivative)


def homotopy(D, u: float, s: float) -> SuperIdempotent:
    """P(s): exponent 1/2 + s on the upper corner and 1/2 - s on the lower one."""
    if not -0.5 <= s <= 0.5:
        raise PreconditionError("homotopy parameter must lie in [-1/2, 1/2]")
    return _heat_family(D, u, 0.5 + s, 0.5 - s, f"P({s:g})")


def graph_projection(D, u: float = 1.0) -> SuperIdempotent:
    """Orthogonal projection onto the graph of uD^+."""
    dp = u * _dplus_of(D)
    dm = _adj(dp)
    n = dp.shape[-1]
    inv = np.linalg.inv(np.eye(n) + dm @ dp)
    return SuperIdempotent(_assemble(inv, inv @ dm, dp @ inv, dp @ inv @ dm), n, "e_D")


def e_one(n_plus: int, n_minus: int, batch: tuple = ()) -> SuperIdempotent:
    """diag(0, 1)."""
    M = np.zeros(batch + (n_plus + n_minus,) * 2, dtype=complex)
    M[..., n_plus:, n_plus:] = np.eye(n_minus)
    return SuperIdempotent(M, n_plus, "e1", np.zeros_like(M))


# --- parametrices and the Connes-Skandalis projector -------------------------------------------------


def parametrix_V(D, u: float = 1.0, spectra: Spectra | None = None) -> np.ndarray:
    """Q_V = g(X) uD^- with g(x) = (1 - e^{-x/2})/x: remainders e^{-X/2}, e^{-Y/2}."""
    sp = _spectra(D, spectra, with_y=False)
    return _apply(sp.u_x, u * u * half_ratio(u * u * sp.w_x)) @ (_adj(sp.d_plus) / u)


def parametrix_e(D, u: float = 1.0) -> np.ndarray:
    """Q_e = (1 + X)^{-1} uD^-: remainders (1 + X)^{-1}, (1 + Y)^{-1}."""
    dp = u * _dplus_of(D)
    dm = _adj(dp)
    return np.linalg.solve(np.eye(dp.shape[-1]) + dm @ dp, dm)


def connes_skandalis(Q: np.ndarray, D, u: float = 1.0, s_plus: np.ndarray | None = None,
                     s_minus: np.ndarray | None = None, tol: float = CS_ABORT) -> SuperIdempotent:
    """[[S+^2, S+(1 + S+)Q], [S- uD^+, 1 - S-^2]] for a parametrix Q of uD^+."""
    dp = u * _dplus_of(D)
    n, m = dp.shape[-1], dp.shape[-2]
    S_p = np.eye(n) - Q @ dp if s_plus is None else s_plus
    S_m = np.eye(m) - dp @ Q if s_minus is None else s_minus
    P = SuperIdempotent(_assemble(S_p @ S_p, S_p @ (np.eye(n) + S_p) @ Q, S_m @ dp, np.eye(m) - S_m @ S_m),
                        n, "P_Q")
    P.certify(tol)
    return P


# --- true parametrix on slab models -------------------------------------------------------------------


def cutoff_profile(geom: SlabGeometry, width: int) -> np.ndarray:
    """chi(t) = 1 for t <= -width, linear down to 0 at t = 0, 0 in the interior; one value per site."""
    t = geom.t_values
    return np.clip(-t / width, 0.0, 1.0)


def decay_shells(M: np.ndarray, geom: SlabGeometry, window: int, start: int = 0):
    """Max |M(t, t')| over trusted entries whose deeper site sits at depth r, r = start..window."""
    sites = geom.site_of_index()
    keep = sites >= -window
    rs, mags = [], []
    for r in range(start, window + 1):
        rows = np.where(sites == -r)[0]
        cols = np.where(keep & (sites >= -r))[0]
        mags.append(max(np.max(np.abs(M[np.ix_(rows, cols)]), initial=0.0),
                        np.max(np.abs(M[np.ix_(cols, rows)]), initial=0.0)))
        rs.append(r)
    return np.array(rs), np.array(mags)


@dataclass
class TrueParametrix:
    q: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    window: int | None = None
    epsilon_plus: float | None = None
    epsilon_minus: float | None = None
    decay_cap: float | None = None
    correction_kernel_nodes: int = 0
    warnings: list = field(default_factory=list)

    def window_trace(self, M: np.ndarray, geom: SlabGeometry | None) -> complex:
        if geom is None:
            return complex(np.trace(M))
        idx = np.arange((-self.window - geom.t_min) * geom.fiber, geom.dim)
        return complex(np.trace(M[np.ix_(idx, idx)]))


def _symbolic(D, u, symbolic, spectra=None):
    if symbolic == "V":
        return parametrix_V(D, u, spectra)
    if symbolic == "e":
        return parametrix_e(D, u)
    raise PreconditionError(f"unknown symbolic parametrix {symbolic!r}; use 'V' or 'e'")


def true_parametrix(model: DiracModel, u: float = 1.0, symbolic: str = "V", cutoff_width: int = 4,
                    margin: int = 20, min_rate_factor: float = 0.9, spectra: Spectra | None = None
                    ) -> TrueParametrix:
    """Q_b = Q_sym + chi s(G R^-) chi on a slab model, with G the inverse of the cylinder operator
    and R^- the symbolic remainder on the cylinder.  The remainders S+ = 1 - Q_b uD^+ and
    S- = 1 - uD^+ Q_b are certified residual by their fitted decay away from the junction.
    """
    Q = _symbolic(model, u, symbolic, spectra)
    dp = u * model.d_plus
    if not np.any(dp.imag):
        dp = np.ascontiguousarray(dp.real)
    n, m = dp.shape[1], dp.shape[0]
    geom = model.geometry
    if geom is None:
        return TrueParametrix(Q, np.eye(n) - Q @ dp, np.eye(m) - dp @ Q)
    model.require_gap()
    if not 0 < cutoff_width < geom.depth - margin:
        raise PreconditionError("cutoff ramp must fit inside the trusted part of the slab")
    cyl = build_cylinder_dirac(model.boundary, model.scheme)
    fam = cyl.indicial_plus()

    def correction(lam):
        d = u * fam(lam)
        if symbolic == "V":
            w, U = np.linalg.eigh(d @ d.conj().T)
            rem = (U * np.exp(-w / 2)) @ U.conj().T
        else:
            rem = np.linalg.inv(np.eye(d.shape[0]) + d @ d.conj().T)
        return np.linalg.solve(d, rem)

    kernel, nodes = fibers_to_kernel(correction)
    chi = np.repeat(cutoff_profile(geom, cutoff_width), geom.fiber)
    Q_b = Q + (chi[:, None] * invariant_matrix(kernel, geom)) * chi[None, :]
    S_p = np.eye(n) - Q_b @ dp
    S_m = np.eye(m) - dp @ Q_b
    window = geom.depth - margin
    cap = min(scheme_decay_cap(model.boundary, model.scheme), float(model.gap) if model.gap else np.inf)
    out = TrueParametrix(Q_b, S_p, S_m, window, decay_cap=cap, correction_kernel_nodes=nodes)
    for name, S in (("S+", S_p), ("S-", S_m)):
        eps, _ = fit_decay(*decay_shells(S, geom, window, start=cutoff_width + 1))
        setattr(out, "epsilon_plus" if name == "S+" else "epsilon_minus", eps)
        if not eps >= min_rate_factor * cap:
            raise ConvergenceError(f"remainder {name} is not residual on this slab (fitted rate {eps:.3g} < "
                                   f"{min_rate_factor}*{cap:.3g}); increase the slab depth beyond {geom.depth}")
        if model.gap and eps >= model.gap:
            # the continuum theory has eps < delta; on the lattice this is recorded, not enforced
            out.warnings.append(f"{name} fitted decay rate {eps:.3g} >= boundary gap {model.gap:g}")
    return out


# --- cylinder paths and relative triples ----------------------------------------------------------------


def cylinder_fibers(model: DiracModel, n_nodes: int) -> np.ndarray:
    return build_cylinder_dirac(model.boundary, model.scheme).indicial_plus().on_grid(n_nodes)


def cylinder_idempotent(dplus_fibers: np.ndarray, t: float, adjoint: bool = False,
                        derivative: bool = False) -> SuperIdempotent:
    """V_{tD_cyl} (or its adjoint) fiber by fiber, with the exact t-derivative on request."""
    f = cm_idempotent_adjoint if adjoint else cm_idempotent
    return f(dplus_fibers, t, derivative)


def tail_time(dplus_fibers: np.ndarray, u: float = 1.0, tol: float = TAIL_TOL, t_cap: float = 1e3) -> float:
    """Smallest t (doubling from u, then bisected) with max-entry |V_{tD_cyl} - e1| < tol."""
    n, m = dplus_fibers.shape[-1], dplus_fibers.shape[-2]
    e1 = e_one(n, m).matrix

    def gap(t):
        return float(np.max(np.abs(cylinder_idempotent(dplus_fibers, t).matrix - e1)))

    hi = u
    while gap(hi) >= tol:
        hi *= 2
        if hi > t_cap:
            raise ConvergenceError(f"cylinder path does not reach e1 within t={t_cap:g}; boundary gap too small")
    lo = hi / 2 if hi > u else hi
    for _ in range(40):
        if hi - lo < 1e-3 * hi:
            break
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if gap(mid) < tol else (mid, hi)
    return hi


def _path_map(u: float):
    """s in [0, 1) -> t = u/(1 - s), with dt/ds."""
    return (lambda s: u / (1.0 - s)), (lambda s: u / (1.0 - s) ** 2)


def cylinder_path(dplus_fibers: np.ndarray, u: float = 1.0, symmetrized: bool = False,
                  tail_tol: float = TAIL_TOL, adjoint: bool = False) -> IdempotentPath:
    """s -> V_{tD_cyl}, t = u/(1 - s), as FiberFields; e1 adjoined at s = 1.

    With ``symmetrized`` the value is V (+) V* (block-diagonal direct sum); ``adjoint`` gives V*.  Past the tail
    time T the path is replaced by e1; the discarded piece is below ``tail_tol``.
    """
    n, m = dplus_fibers.shape[-1], dplus_fibers.shape[-2]
    N = dplus_fibers.shape[0]
    t_of, dt_ds = _path_map(u)
    T = tail_time(dplus_fibers, u, tail_tol)
    e1 = e_one(n, m, (N,)).matrix
    if symmetrized:
        e1 = _direct_sum(e1, e1)
    zero = np.zeros_like(e1)
    cache: dict = {}  # last node only: value and derivative are requested in turn

    def at(s):
        if s not in cache:
            cache.clear()
            t = t_of(s) if s < 1 else np.inf
            if t > T:
                cache[s] = (e1, zero)
            else:
                V = cylinder_idempotent(dplus_fibers, t, adjoint=adjoint, derivative=True)
                val, der = V.matrix, V.derivative
                if symmetrized:
                    Vs = V.adjoint()
                    val, der = _direct_sum(val, Vs.matrix), _direct_sum(der, Vs.derivative)
                cache[s] = (val, der * dt_ds(s))
        return cache[s]

    return IdempotentPath(lambda s: FiberField(at(s)[0]), lambda s: FiberField(at(s)[1]))


def _direct_sum(A, B):
    z1 = np.zeros(A.shape[:-1] + (B.shape[-1],), dtype=complex)
    z2 = np.zeros(B.shape[:-1] + (A.shape[-1],), dtype=complex)
    return _assemble(A, z1, z2, B)


def direct_sum(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return _direct_sum(A, B)


def relative_triple(model: DiracModel, u: float = 1.0, n_nodes: int = 256, symmetrized: bool = False,
                    tail_tol: float = TAIL_TOL, adjoint: bool = False, spectra: Spectra | None = None
                    ) -> RelativeKTriple:
    """(V_{uD}, e1, t -> V_{tD_cyl}) on a slab model, as slab operators carrying their fibers.

    The K-theory convention of :class:`RelativeKTriple` runs the path from I(e0) to I(e1);
    the heat path leaves V_{uD_cyl} and ends at e1, so it enters reversed with e0 = e1 and
    the slab idempotent in the end slot.  ``adjoint`` uses V* throughout, ``symmetrized``
    uses V (+) V*.  Endpoint residuals compare the deep diagonal block of the slab V with
    the kernel of V_{uD_cyl}.
    """
    from .b_trace import SlabOperator

    if model.geometry is None:
        raise PreconditionError("relative triples need a slab model")
    model.require_gap()
    fibers = cylinder_fibers(model, n_nodes)
    V = cm_idempotent(model, u, spectra=spectra)
    Vc = cylinder_idempotent(fibers, u)
    n, m = model.dims
    d = model.geometry.fiber
    e1 = e_one(n, m).matrix
    e1c = e_one(d, d, (n_nodes,)).matrix
    if symmetrized:
        V_mat, V_fib = _direct_sum(V.matrix, V.adjoint().matrix), _direct_sum(Vc.matrix, Vc.adjoint().matrix)
        e1, e1c = _direct_sum(e1, e1), _direct_sum(e1c, e1c)
    elif adjoint:
        V_mat, V_fib = V.adjoint().matrix, Vc.adjoint().matrix
    else:
        V_mat, V_fib = V.matrix, Vc.matrix
    copies = V_mat.shape[0] // model.geometry.dim
    geom = model.geometry
    V_op = SlabOperator(V_mat, geom, copies, FiberField(V_fib))
    e1_op = SlabOperator(e1, geom, copies, FiberField(e1c))
    path = cylinder_path(fibers, u, symmetrized, tail_tol, adjoint=adjoint and not symmetrized).reversed()
    # path(0) is e1 exactly; path(1) is V_{uD_cyl}, compared with the deep slab block.
    return RelativeKTriple(V_op, e1_op, path, (0.0, deep_block_residual(model, u, n_nodes, V=V.matrix)))


def deep_block_residual(model: DiracModel, u: float, n_nodes: int = 256, depth_offset: int = 24,
                        V: np.ndarray | None = None) -> float:
    """Max entry difference between the slab V at a deep site and the V_{uD_cyl} kernel."""
    geom = model.geometry
    V = cm_idempotent(model, u).matrix if V is None else V
    fibers = cylinder_idempotent(cylinder_fibers(model, n_nodes), u).matrix
    kernel0 = np.mean(fibers, axis=0)  # K(0) of each block
    n = model.dims[0]
    d = geom.fiber
    t = -(geom.depth - depth_offset)
    b = geom.block(t)
    worst = 0.0
    for (r0, c0) in ((0, 0), (0, n), (n, 0), (n, n)):
        blk = V[r0 + b.start:r0 + b.stop, c0 + b.start:c0 + b.stop]
        kb = kernel0[(r0 > 0) * d:(r0 > 0) * d + d, (c0 > 0) * d:(c0 > 0) * d + d]
        worst = max(worst, float(np.max(np.abs(blk - kb))))
    return worst


def excision(P: np.ndarray, Q: np.ndarray) -> RelativeKTriple:
    return excision_triple(P, Q)

