"""Lattice Dirac-type operators with a cylindrical end, the invariant + residual split of
operators on the slab, and indicial families over the dual circle.

Conventions.  Sites of a slab are t = t_min .. M with t_min = -depth + 1; sites t <= 0 form
the cylinder (its end sits at t -> -infinity), sites 1..M the interior.  Every site carries a
fiber C^d and the global index of (t, alpha) is (t - t_min) d + alpha.  A translation-invariant
kernel K acts by (K f)(t) = sum_n K(n) f(t - n) and its indicial family is
I(lam) = sum_n K(n) exp(-i lam n).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, InfeasibleError, PreconditionError

KERNEL_TOL = 1e-12
SCHEMES = ("forward", "balanced")


# --- geometry --------------------------------------------------------------------------


@dataclass(frozen=True)
class SlabGeometry:
    depth: int  # number of cylinder sites t = -depth+1 .. 0
    interior: int  # number of interior sites t = 1 .. interior
    fiber: int

    @property
    def t_min(self) -> int:
        return -self.depth + 1

    @property
    def t_values(self) -> np.ndarray:
        return np.arange(self.t_min, self.interior + 1)

    @property
    def n_sites(self) -> int:
        return self.depth + self.interior

    @property
    def dim(self) -> int:
        return self.n_sites * self.fiber

    def block(self, t: int) -> slice:
        i = (t - self.t_min) * self.fiber
        return slice(i, i + self.fiber)

    def site_of_index(self) -> np.ndarray:
        return np.repeat(self.t_values, self.fiber)

    def deeper(self, extra: int) -> "SlabGeometry":
        return replace(self, depth=self.depth + extra)


# --- kernels and indicial families ----------------------------------------------------------


def _clean(kernel: dict, tol: float = 0.0) -> dict:
    return {n: np.asarray(v) for n, v in sorted(kernel.items()) if np.max(np.abs(v)) > tol}


def kernel_product(a: dict, b: dict, tol: float = 0.0) -> dict:
    out: dict = {}
    for n, x in a.items():
        for m, y in b.items():
            out[n + m] = out[n + m] + x @ y if n + m in out else x @ y
    return _clean(out, tol)


def kernel_adjoint(a: dict) -> dict:
    return {-n: v.conj().T for n, v in a.items()}


def kernel_sum(*kernels, weights=None) -> dict:
    weights = weights or [1.0] * len(kernels)
    out: dict = {}
    for w, k in zip(weights, kernels):
        for n, v in k.items():
            out[n] = out[n] + w * v if n in out else w * v
    return _clean(out)


@dataclass(frozen=True)
class IndicialFamily:
    """lam -> sum_n K(n) exp(-i lam n) on [-pi, pi)."""

    kernel: dict
    dim: int

    def __call__(self, lam: float) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for n, v in self.kernel.items():
            out += v * np.exp(-1j * lam * n)
        return out

    def derivative(self, lam: float) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for n, v in self.kernel.items():
            out += (-1j * n) * v * np.exp(-1j * lam * n)
        return out

    def on_grid(self, n_nodes: int) -> np.ndarray:
        """Fibers at lam_j = 2 pi j / n_nodes, shape (n_nodes, d, d)."""
        lam = 2 * np.pi * np.arange(n_nodes) / n_nodes
        return np.stack([self(x) for x in lam])

    def derivative_on_grid(self, n_nodes: int) -> np.ndarray:
        lam = 2 * np.pi * np.arange(n_nodes) / n_nodes
        return np.stack([self.derivative(x) for x in lam])

    def support(self) -> tuple[int, int]:
        ns = list(self.kernel)
        return (min(ns), max(ns)) if ns else (0, 0)

    def __matmul__(self, other: "IndicialFamily") -> "IndicialFamily":
        return IndicialFamily(kernel_product(self.kernel, other.kernel), self.dim)

    @classmethod
    def zero(cls, dim: int) -> "IndicialFamily":
        return cls({}, dim)


def kernel_from_fibers(fibers: np.ndarray, tol: float = KERNEL_TOL) -> dict:
    """Inverse of ``on_grid``: K(n) = (1/N) sum_j F(lam_j) exp(i lam_j n), n in (-N/2, N/2]."""
    N = fibers.shape[0]
    coeffs = np.fft.ifft(fibers, axis=0)  # (1/N) sum_j F_j exp(+2 pi i j n / N)
    out = {}
    for idx in range(N):
        n = idx if idx <= N // 2 else idx - N
        if np.max(np.abs(coeffs[idx])) > tol:
            out[n] = coeffs[idx]
    return dict(sorted(out.items()))


def fibers_to_kernel(func: Callable[[float], np.ndarray], tol: float = KERNEL_TOL,
                     n_nodes: int = 64, max_nodes: int = 4096) -> tuple[dict, int]:
    """Sample a smooth periodic matrix function and double the grid until the Fourier tail
    (coefficients with |n| > N/4) is below ``tol``.  Returns (kernel, nodes used)."""
    while True:
        lam = 2 * np.pi * np.arange(n_nodes) / n_nodes
        fibers = np.stack([func(x) for x in lam])
        coeffs = np.fft.ifft(fibers, axis=0)
        ns = np.fft.fftfreq(n_nodes, 1.0 / n_nodes)
        tail = np.max(np.abs(coeffs[np.abs(ns) > n_nodes // 4])) if n_nodes >= 8 else np.inf
        if tail < tol or n_nodes >= max_nodes:
            if tail >= tol:
                raise PreconditionError(f"Fourier tail {tail:.3g} still above {tol:g} at {n_nodes} nodes")
            return kernel_from_fibers(fibers, tol), n_nodes
        n_nodes *= 2


# --- Dirac models -----------------------------------------------------------------------------


@dataclass(frozen=True)
class GapReport:
    passed: bool
    delta: float
    min_abs_eigenvalue: float
    eigenvalues: tuple


def verify_gap(boundary: np.ndarray, delta: float) -> GapReport:
    boundary = np.asarray(boundary)
    if not np.allclose(boundary, boundary.conj().T, atol=1e-13):
        raise ConfigError("boundary operator is not self-adjoint")
    ev = np.linalg.eigvalsh(boundary)
    m = float(np.min(np.abs(ev)))
    return GapReport(m > delta, float(delta), m, tuple(float(x) for x in ev))


@dataclass(frozen=True)
class DiracModel:
    """Graded operator D = [[0, D^-], [D^+, 0]] on H^+ + H^-, with D^- = (D^+)^*."""

    d_plus: np.ndarray
    boundary: np.ndarray | None = None
    gap: float = 0.0
    geometry: SlabGeometry | None = None
    scheme: str | None = None
    twist: tuple | None = None

    @property
    def d_minus(self) -> np.ndarray:
        return self.d_plus.conj().T

    @property
    def dims(self) -> tuple[int, int]:
        n_minus, n_plus = self.d_plus.shape
        return n_plus, n_minus

    @property
    def dirac(self) -> np.ndarray:
        n_plus, n_minus = self.dims
        D = np.zeros((n_plus + n_minus,) * 2, dtype=complex)
        D[:n_plus, n_plus:] = self.d_minus
        D[n_plus:, :n_plus] = self.d_plus
        return D

    @property
    def grading(self) -> np.ndarray:
        n_plus, n_minus = self.dims
        return np.diag(np.r_[np.ones(n_plus), -np.ones(n_minus)])

    def self_adjoint_residual(self) -> float:
        D = self.dirac
        return float(np.max(np.abs(D - D.conj().T)))

    def grading_residual(self) -> float:
        D, g = self.dirac, self.grading
        return float(np.max(np.abs(g @ D + D @ g)))

    def scaled(self, u: float) -> "DiracModel":
        return replace(self, d_plus=u * self.d_plus)

    def require_gap(self):
        if self.boundary is None:
            return
        rep = verify_gap(self.boundary, self.gap)
        if not rep.passed:
            raise InfeasibleError(f"boundary gap violated: min |eigenvalue| {rep.min_abs_eigenvalue:.3g} "
                                  f"<= {self.gap:g}")


# --- cylinder operators ---------------------------------------------------------------------------


def _check_boundary(boundary) -> np.ndarray:
    boundary = np.atleast_2d(np.asarray(boundary, dtype=complex))
    if boundary.shape[0] != boundary.shape[1] or not np.allclose(boundary, boundary.conj().T, atol=1e-13):
        raise ConfigError("boundary operator must be square and self-adjoint")
    return boundary


def cylinder_kernel(boundary, scheme: str = "forward") -> dict:
    """Kernel of D^+_cyl.

    forward:  D^+ = -d^+ + D_b, so K(0) = 1 + D_b, K(-1) = -1 (symbol 1 + D_b - e^{i lam}).
    balanced: the forward copy plus a copy with the difference pair exchanged,
              D^+ = -d^- + D_b, K(0) = D_b - 1, K(1) = 1 (symbol D_b - 1 + e^{-i lam}).
    """
    B = _check_boundary(boundary)
    d = B.shape[0]
    eye = np.eye(d)
    if scheme == "forward":
        return {-1: -eye.astype(complex), 0: eye + B}
    if scheme == "balanced":
        z = np.zeros((d, d), dtype=complex)
        return {-1: np.block([[-eye, z], [z, z]]), 0: np.block([[eye + B, z], [z, B - eye]]),
                1: np.block([[z, z], [z, eye]])}
    raise ConfigError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def scheme_fiber_dim(boundary_dim: int, scheme: str) -> int:
    return boundary_dim * (2 if scheme == "balanced" else 1)


def scheme_decay_cap(boundary, scheme: str) -> float:
    """Exponential decay rate of the inverse cylinder kernel: distance of the symbol's zeros
    from the unit circle, i.e. min |log|1 + mu|| (and |log|1 - mu|| for the exchanged copy)."""
    ev = np.linalg.eigvalsh(_check_boundary(boundary))
    rates = [abs(np.log(abs(1 + mu))) for mu in ev]
    if scheme == "balanced":
        rates += [abs(np.log(abs(1 - mu))) for mu in ev]
    return float(min(rates))


@dataclass(frozen=True)
class CylinderDirac:
    boundary: np.ndarray
    scheme: str
    kernel: dict  # D^+ kernel

    @property
    def fiber_dim(self) -> int:
        return next(iter(self.kernel.values())).shape[0]

    def indicial_plus(self) -> IndicialFamily:
        return IndicialFamily(self.kernel, self.fiber_dim)

    def indicial_minus(self) -> IndicialFamily:
        return IndicialFamily(kernel_adjoint(self.kernel), self.fiber_dim)

    def fiber(self, lam: float) -> np.ndarray:
        """Full graded fiber [[0, D^-(lam)], [D^+(lam), 0]]."""
        dp = self.indicial_plus()(lam)
        z = np.zeros_like(dp)
        return np.block([[z, dp.conj().T], [dp, z]])

    def self_adjoint_residual(self, n_nodes: int = 16) -> float:
        worst = 0.0
        for lam in 2 * np.pi * np.arange(n_nodes) / n_nodes:
            F = self.fiber(lam)
            worst = max(worst, float(np.max(np.abs(F - F.conj().T))))
        return worst


def build_cylinder_dirac(boundary, scheme: str = "forward") -> CylinderDirac:
    B = _check_boundary(boundary)
    return CylinderDirac(B, scheme, cylinder_kernel(B, scheme))


def invariant_matrix(kernel: dict, geom: SlabGeometry, region: str = "cylinder") -> np.ndarray:
    """s(K): the kernel placed on sites t, t' <= 0 (``cylinder``) or on the whole slab (``all``)."""
    M = np.zeros((geom.dim, geom.dim), dtype=complex)
    top = 0 if region == "cylinder" else geom.interior
    for t in range(geom.t_min, top + 1):
        for n, v in kernel.items():
            s = t - n
            if geom.t_min <= s <= top:
                M[geom.block(t), geom.block(s)] = v
    return M


def build_slab_model(boundary, geom: SlabGeometry, scheme: str = "forward",
                     interior_perturbation: dict | None = None, gap: float = 0.0) -> DiracModel:
    """Cylinder D^+ on the whole slab (cut off at both ends) plus an interior perturbation.

    ``interior_perturbation`` maps a site t >= 1 to a (d x d) block added to D^+(t, t).
    """
    cyl = build_cylinder_dirac(boundary, scheme)
    if cyl.fiber_dim != geom.fiber:
        raise ConfigError(f"geometry fiber {geom.fiber} does not match cylinder fiber {cyl.fiber_dim}")
    D = invariant_matrix(cyl.kernel, geom, region="all")
    for t, W in (interior_perturbation or {}).items():
        if not 1 <= t <= geom.interior:
            raise ConfigError(f"perturbation site {t} is not an interior site")
        D[geom.block(t), geom.block(t)] += W
    return DiracModel(D, cyl.boundary, gap, geom, scheme)


def random_boundary(dim: int, rng: np.random.Generator, low: float = 0.5, high: float = 1.5,
                    signs=None, real: bool = False) -> np.ndarray:
    """U diag(mu) U^* with |mu| in [low, high] and the given (or random) signs.
    ``real`` draws an orthogonal U, which keeps every slab operator real."""
    mags = rng.uniform(low, high, size=dim)
    signs = np.asarray(signs if signs is not None else rng.choice([-1.0, 1.0], size=dim))
    X = rng.normal(size=(dim, dim)) + (0 if real else 1j * rng.normal(size=(dim, dim)))
    U, _ = np.linalg.qr(X)
    return U @ np.diag(signs * mags) @ U.conj().T


def random_interior_perturbation(geom: SlabGeometry, rng: np.random.Generator, strength: float = 0.5,
                                 real: bool = False) -> dict:
    d = geom.fiber
    return {t: strength * (rng.normal(size=(d, d)) + (0 if real else 1j * rng.normal(size=(d, d))))
            / np.sqrt((1 if real else 2) * d)
            for t in range(1, geom.interior + 1)}


# --- closed models ----------------------------------------------------------------------------------


def circle_defect_model(n_sites: int, fiber: int, extra_plus: int, rng: np.random.Generator,
                        hopping: float = 1.0) -> DiracModel:
    """Closed circle lattice; site 0 carries ``extra_plus`` additional orbitals on H^+ (or H^-
    when negative), so D^+ is rectangular with index dim H^+ - dim H^-."""
    n_plus = n_sites * fiber + max(extra_plus, 0)
    n_minus = n_sites * fiber + max(-extra_plus, 0)
    D = np.zeros((n_minus, n_plus), dtype=complex)
    mass = rng.uniform(0.5, 1.5, size=n_sites * fiber)
    for s in range(n_sites):
        i, j = s * fiber, ((s + 1) % n_sites) * fiber
        D[i:i + fiber, i:i + fiber] += np.diag(mass[i:i + fiber])
        D[i:i + fiber, j:j + fiber] -= hopping * np.eye(fiber)
    D[:n_sites * fiber, :n_sites * fiber] += 0.3 * (rng.normal(size=(n_sites * fiber,) * 2)) / np.sqrt(fiber)
    if extra_plus > 0:
        D[:fiber, n_sites * fiber:] = rng.normal(size=(fiber, extra_plus))
    elif extra_plus < 0:
        D[n_sites * fiber:, :fiber] = rng.normal(size=(-extra_plus, fiber))
    return DiracModel(D)


# --- b-operators on the slab ------------------------------------------------------------------------------


def fit_decay(distances: np.ndarray, magnitudes: np.ndarray, floor: float = 1e-13) -> tuple[float, float]:
    """Least-squares fit of log magnitude = log C - eps * distance over values above ``floor``.
    Returns (eps, C); eps = inf when everything is below the floor."""
    distances, magnitudes = np.asarray(distances, float), np.asarray(magnitudes, float)
    keep = magnitudes > floor
    if keep.sum() < 2:
        return float("inf"), float(np.max(magnitudes, initial=0.0))
    slope, intercept = np.polyfit(distances[keep], np.log(magnitudes[keep]), 1)
    return float(-slope), float(np.exp(intercept))


@dataclass
class BKernel:
    """Operator on a slab, split as s(K) + residual.

    ``matrix`` is the full operator on the slab; ``kernel`` the translation-invariant part seen
    deep in the cylinder; ``window`` the depth R such that sites t >= -R are trusted (far from
    the cut-off at t_min).  ``geometry=None`` denotes a purely translation-invariant operator
    on the infinite cylinder, carried by its kernel alone.
    """

    kernel: dict
    matrix: np.ndarray | None = None
    geometry: SlabGeometry | None = None
    window: int | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.geometry is not None and self.window is None:
            self.window = self.geometry.depth - 1

    @property
    def fiber(self) -> int:
        if self.geometry is not None:
            return self.geometry.fiber
        return next(iter(self.kernel.values())).shape[0]

    @classmethod
    def translation_invariant(cls, kernel: dict) -> "BKernel":
        return cls(_clean(kernel))

    @classmethod
    def residual_only(cls, matrix: np.ndarray, geom: SlabGeometry, window: int | None = None) -> "BKernel":
        return cls({}, np.asarray(matrix, dtype=complex), geom, window)

    @classmethod
    def from_kernel(cls, kernel: dict, geom: SlabGeometry, residual: np.ndarray | None = None,
                    window: int | None = None) -> "BKernel":
        M = invariant_matrix(kernel, geom)
        if residual is not None:
            M = M + residual
        return cls(_clean(kernel), M, geom, window)

    def invariant_part(self) -> np.ndarray:
        return invariant_matrix(self.kernel, self.geometry)

    def residual_part(self) -> np.ndarray:
        return self.matrix - self.invariant_part()

    def trusted_sites(self) -> np.ndarray:
        return np.arange(-self.window, self.geometry.interior + 1)

    def trusted_indices(self) -> np.ndarray:
        g = self.geometry
        start = (-self.window - g.t_min) * g.fiber
        return np.arange(start, g.dim)

    def window_matrix(self, which: str = "full") -> np.ndarray:
        idx = self.trusted_indices()
        M = self.residual_part() if which == "residual" else self.matrix
        return M[np.ix_(idx, idx)]

    # algebra -------------------------------------------------------------------------------
    def _compatible(self, other: "BKernel"):
        if (self.geometry is None) != (other.geometry is None) or (
                self.geometry is not None and self.geometry != other.geometry):
            raise ConfigError("BKernels live on different slabs")

    def __matmul__(self, other: "BKernel") -> "BKernel":
        self._compatible(other)
        kernel = kernel_product(self.kernel, other.kernel, 0.0)
        if self.geometry is None:
            return BKernel(kernel)
        return BKernel(kernel, self.matrix @ other.matrix, self.geometry, min(self.window, other.window))

    def __add__(self, other: "BKernel") -> "BKernel":
        self._compatible(other)
        kernel = kernel_sum(self.kernel, other.kernel)
        if self.geometry is None:
            return BKernel(kernel)
        return BKernel(kernel, self.matrix + other.matrix, self.geometry, min(self.window, other.window))

    def __mul__(self, s) -> "BKernel":
        kernel = {n: s * v for n, v in self.kernel.items()}
        return BKernel(kernel, None if self.matrix is None else s * self.matrix, self.geometry, self.window)

    __rmul__ = __mul__

    def __sub__(self, other: "BKernel") -> "BKernel":
        return self + other * -1.0

    def norm(self) -> float:
        """Max-entry size of the slab matrix (or of the kernel when there is no slab)."""
        if self.matrix is not None:
            return float(np.max(np.abs(self.matrix), initial=0.0))
        return float(max((np.max(np.abs(v)) for v in self.kernel.values()), default=0.0))

    def adjoint(self) -> "BKernel":
        return BKernel(kernel_adjoint(self.kernel), None if self.matrix is None else self.matrix.conj().T,
                       self.geometry, self.window)

    # diagnostics ---------------------------------------------------------------------------
    def residual_shells(self) -> tuple[np.ndarray, np.ndarray]:
        """Max |residual entry| over the shell of sites with min(-t, -t') = r >= 0, r inside the window."""
        g = self.geometry
        R = self.residual_part()
        sites = g.site_of_index()
        rs, mags = [], []
        for r in range(0, self.window + 1):
            rows = np.where(sites == -r)[0]
            cyl = np.where(sites <= -r)[0]
            shell = max(np.max(np.abs(R[np.ix_(rows, cyl)]), initial=0.0),
                        np.max(np.abs(R[np.ix_(cyl, rows)]), initial=0.0))
            rs.append(r)
            mags.append(shell)
        return np.array(rs), np.array(mags)

    def fit_epsilon(self) -> tuple[float, float]:
        eps, C = fit_decay(*self.residual_shells())
        self.epsilon = eps
        return eps, C


def indicial_family(P: BKernel) -> IndicialFamily:
    return IndicialFamily(P.kernel, P.fiber)


# --- invertibility and inverses -------------------------------------------------------------------


@dataclass(frozen=True)
class InvertibilityReport:
    passed: bool
    min_singular_value: float
    argmin: float
    nodes: int


def verify_indicial_invertibility(fam: IndicialFamily, n_nodes: int = 256, tol: float = 1e-10
                                  ) -> InvertibilityReport:
    lam = 2 * np.pi * np.arange(n_nodes) / n_nodes - np.pi
    smin = np.array([np.linalg.svd(fam(x), compute_uv=False)[-1] for x in lam])
    j = int(np.argmin(smin))
    h = 2 * np.pi / n_nodes
    res = minimize_scalar(lambda x: np.linalg.svd(fam(x), compute_uv=False)[-1],
                          bounds=(lam[j] - h, lam[j] + h), method="bounded", options={"xatol": 1e-10})
    best = min(float(smin[j]), float(res.fun))
    where = float(lam[j]) if smin[j] <= res.fun else float(res.x)
    return InvertibilityReport(best > tol, best, where, n_nodes)


def inverse_indicial(fam: IndicialFamily, tol: float = KERNEL_TOL, n_nodes: int = 64,
                     max_nodes: int = 8192) -> BKernel:
    """Kernel of the fiberwise inverse, with its fitted exponential decay rate as ``epsilon``."""
    rep = verify_indicial_invertibility(fam)
    if not rep.passed:
        raise InfeasibleError(f"indicial family not invertible (min singular value {rep.min_singular_value:.3g}"
                              f" at lam={rep.argmin:.4f})")
    kernel, _ = fibers_to_kernel(lambda x: np.linalg.inv(fam(x)), tol, n_nodes, max_nodes)
    out = BKernel(kernel)
    ns = np.array(list(kernel))
    mags = np.array([np.max(np.abs(v)) for v in kernel.values()])
    eps, _ = fit_decay(np.abs(ns), mags, floor=10 * tol)
    out.epsilon = eps
    return out


# --- flux torus ----------------------------------------------------------------------------------------


def hofstadter_hamiltonian(n: int, flux: int, theta=(0.0, 0.0), hopping: float = 1.0) -> np.ndarray:
    """Harper-Hofstadter model on an n x n torus carrying ``flux`` quanta (Landau gauge, flux
    flux/n^2 per plaquette).  Bloch phases exp(i theta) sit on the hops crossing the seams, so
    H(theta) = sum_g H(g) exp(i theta.g) with H(g) the hopping from cell 0 into cell g."""
    alpha = flux / (n * n)
    H = np.zeros((n * n, n * n), dtype=complex)
    for x in range(n):
        for y in range(n):
            i = x * n + y
            j = ((x + 1) % n) * n + y
            phase = 1.0
            if x == n - 1:
                phase = np.exp(-2j * np.pi * flux * y / n) * np.exp(1j * theta[0])
            H[j, i] += -hopping * phase
            j = x * n + (y + 1) % n
            phase = np.exp(2j * np.pi * alpha * x)
            if y == n - 1:
                phase *= np.exp(1j * theta[1])
            H[j, i] += -hopping * phase
    return H + H.conj().T


def lowest_band_projector(n: int, flux: int, theta=(0.0, 0.0)) -> tuple[np.ndarray, float]:
    """Projector onto the lowest ``flux`` eigenvectors of the twisted Hofstadter model and the
    spectral gap above them."""
    H = hofstadter_hamiltonian(n, flux, theta)
    w, U = np.linalg.eigh(H)
    V = U[:, :flux]
    return V @ V.conj().T, float(w[flux] - w[flux - 1])


# --- translation-invariant operators sampled on the dual circle -----------------------------------


@dataclass
class FiberField:
    """Fibers F(lam_j), lam_j = 2 pi j / N, of a translation-invariant operator; the algebra
    operations act fiberwise, which is how the indicial homomorphism sees products."""

    values: np.ndarray  # (N, d, d)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_kernel(cls, kernel: dict, dim: int, n_nodes: int) -> "FiberField":
        return cls(IndicialFamily(kernel, dim).on_grid(n_nodes))

    @classmethod
    def identity(cls, dim: int, n_nodes: int) -> "FiberField":
        return cls(np.broadcast_to(np.eye(dim, dtype=complex), (n_nodes, dim, dim)).copy())

    def __matmul__(self, other: "FiberField") -> "FiberField":
        return FiberField(self.values @ other.values)

    def __add__(self, other: "FiberField") -> "FiberField":
        return FiberField(self.values + other.values)

    def __sub__(self, other: "FiberField") -> "FiberField":
        return FiberField(self.values - other.values)

    def __mul__(self, s) -> "FiberField":
        return FiberField(self.values * s)

    __rmul__ = __mul__

    def adjoint(self) -> "FiberField":
        return FiberField(np.conj(np.swapaxes(self.values, 1, 2)))

    def norm(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))

    def kernel(self, tol: float = KERNEL_TOL) -> dict:
        return kernel_from_fibers(self.values, tol)

    def lam_derivative(self) -> "FiberField":
        """Spectral differentiation: the kernel coefficients pick up a factor -i n."""
        N = self.n_nodes
        coeffs = np.fft.ifft(self.values, axis=0)
        n = np.fft.fftfreq(N, 1.0 / N)
        if N % 2 == 0:
            n[N // 2] = 0.0
        return FiberField(np.fft.fft(coeffs * (-1j * n)[:, None, None], axis=0))

    def fourier_tail(self) -> float:
        """Largest kernel coefficient with |n| > N/4: an aliasing diagnostic."""
        N = self.n_nodes
        coeffs = np.fft.ifft(self.values, axis=0)
        n = np.abs(np.fft.fftfreq(N, 1.0 / N))
        return float(np.max(np.abs(coeffs[n > N // 4]), initial=0.0))

    def circle_trace(self) -> complex:
        """Integral over the dual circle of tr F(lam) d lam (trapezoid rule)."""
        return complex(2 * np.pi * np.mean(np.trace(self.values, axis1=1, axis2=2)))
