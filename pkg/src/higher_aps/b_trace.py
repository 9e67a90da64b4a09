"""Regularized trace on slab operators, its commutator defect, and the ||| . ||| norms.

A slab operator is a dense matrix on sites t_min..M (cylinder t <= 0, interior 1..M) whose
rows and columns deeper than the trusted window -R are discarded.  Its translation-invariant
part is seen through p_inf = tr K(0), the diagonal value deep in the cylinder.

The derivative along the cylinder acts on operators by diagonal translation,
[V, P](t, t') = (P(t+1, t'+1) - P(t-1, t'-1)) / 2, the lattice analogue of the Lie
derivative of a kernel.  With phi = min(t, -a) on the cylinder and phi = 0 in the interior
(so no boundary term appears at the top site), chi = 1 - V(phi) and

    bTr(P) = -Tr(phi [V, P]) + Tr(chi P),

the value is independent of the offset a and equals Tr(P) when P decays in the cylinder.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, PreconditionError
from .group_core import GroupSpec
from .lattice_models import BKernel, FiberField, IndicialFamily, SlabGeometry

DEFECT_TOL = 1e-9


@dataclass
class SlabOperator:
    """Dense operator on ``copies`` stacked copies of a slab, with its cylinder fibers.

    The fibers (when known) give the deep diagonal value p_inf and the indicial image; they
    are dropped by products, whose deep value is not tracked.
    """

    matrix: np.ndarray
    geometry: SlabGeometry
    copies: int = 1
    indicial: FiberField | None = None
    p_inf: complex | None = None

    def __post_init__(self):
        if self.p_inf is None and self.indicial is not None:
            self.p_inf = complex(np.trace(np.mean(self.indicial.values, axis=0)))

    def _lin(self, matrix, other=None, s=1.0):
        fib = None
        p = None
        if other is None:
            fib = None if self.indicial is None else self.indicial * s
            p = None if self.p_inf is None else s * self.p_inf
        else:
            if self.indicial is not None and other.indicial is not None:
                fib = self.indicial + other.indicial
            if self.p_inf is not None and other.p_inf is not None:
                p = self.p_inf + other.p_inf
        return SlabOperator(matrix, self.geometry, self.copies, fib, p)

    def __add__(self, other: "SlabOperator") -> "SlabOperator":
        return self._lin(self.matrix + other.matrix, other)

    def __sub__(self, other: "SlabOperator") -> "SlabOperator":
        return self + other * -1.0

    def __mul__(self, s) -> "SlabOperator":
        return self._lin(self.matrix * s, s=s)

    __rmul__ = __mul__

    def __matmul__(self, other: "SlabOperator") -> "SlabOperator":
        fib = None if self.indicial is None or other.indicial is None else self.indicial @ other.indicial
        return SlabOperator(self.matrix @ other.matrix, self.geometry, self.copies, fib)

    def norm(self) -> float:
        return float(np.max(np.abs(self.matrix), initial=0.0))


@dataclass(frozen=True)
class RegularizationData:
    """phi(t) = min(t, -offset) for t <= 0 and 0 in the interior; chi = 1 - V(phi)."""

    geometry: SlabGeometry
    window: int
    offset: int = 2

    def __post_init__(self):
        if not 0 <= self.offset <= self.window - 2:
            raise PreconditionError("regularization offset must satisfy 0 <= a <= window - 2")
        if self.window >= self.geometry.depth:
            raise PreconditionError("window must stay inside the slab")

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.window, self.geometry.interior + 1)

    def phi(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.where(t <= 0, np.minimum(t, -float(self.offset)), 0.0)

    def v_phi(self) -> np.ndarray:
        t = self.sites
        return 0.5 * (self.phi(t + 1) - self.phi(t - 1))

    def chi(self) -> np.ndarray:
        return 1.0 - self.v_phi()


def default_regularization(geom: SlabGeometry, margin: int = 20, offset: int = 2) -> RegularizationData:
    return RegularizationData(geom, geom.depth - margin, offset)


def site_diagonal(M: np.ndarray, geom: SlabGeometry, copies: int = 1) -> np.ndarray:
    """p(t) = sum over copies of tr M(t, t) for every slab site, for M acting on copies of the slab."""
    d = geom.fiber
    diag = np.diagonal(M).reshape(copies, geom.n_sites, d)
    return diag.sum(axis=(0, 2))


def b_trace_from_diagonal(p_sites: np.ndarray, p_inf: complex, reg: RegularizationData) -> complex:
    """The regularized trace from the site diagonal (all slab sites) and its deep limit."""
    g = reg.geometry
    lo = -reg.window - g.t_min
    p = np.concatenate([[p_inf], np.asarray(p_sites)[lo:], [0.0]])  # sites -R-1 .. M+1
    t = reg.sites
    derivative = 0.5 * (p[2:] - p[:-2])
    return complex(-np.sum(reg.phi(t) * derivative) + np.sum(reg.chi() * p[1:-1]))


def b_trace(P, reg: RegularizationData, p_inf: complex | None = None, copies: int = 1) -> complex:
    """bTr of a BKernel (deep value from its kernel), a SlabOperator, or a dense slab matrix
    (``p_inf`` given)."""
    if isinstance(P, SlabOperator):
        if P.p_inf is None:
            raise PreconditionError("slab operator carries no deep diagonal value")
        return b_trace_from_diagonal(site_diagonal(P.matrix, reg.geometry, P.copies), P.p_inf, reg)
    if isinstance(P, BKernel):
        if P.geometry is None:
            raise PreconditionError("b_trace needs a slab representative")
        if P.window < reg.window:
            raise PreconditionError(f"operator is trusted only to depth {P.window} < window {reg.window}")
        k0 = P.kernel.get(0)
        p_inf = 0.0 if k0 is None else complex(np.trace(k0))
        M = P.matrix
    else:
        M = np.asarray(P)
        if p_inf is None:
            raise PreconditionError("dense slab operators need their deep diagonal value p_inf")
    return b_trace_from_diagonal(site_diagonal(M, reg.geometry, copies), p_inf, reg)


def lie_derivative(M: np.ndarray, geom: SlabGeometry) -> np.ndarray:
    """[V, M] on the slab; rows and columns at the two ends see zero beyond the slab."""
    d = geom.fiber
    n = geom.dim
    up = np.zeros_like(M)
    down = np.zeros_like(M)
    up[:n - d, :n - d] = M[d:, d:]      # M(t+1, t'+1)
    down[d:, d:] = M[:n - d, :n - d]    # M(t-1, t'-1)
    return 0.5 * (up - down)


def _window(M: np.ndarray, reg: RegularizationData) -> np.ndarray:
    g = reg.geometry
    idx = np.arange((-reg.window - g.t_min) * g.fiber, g.dim)
    return M[np.ix_(idx, idx)]


def commutator_defect(A: BKernel, B: BKernel, reg: RegularizationData, n_nodes: int = 16,
                      max_nodes: int = 4096, tol: float = DEFECT_TOL) -> tuple[complex, complex]:
    """(bTr([A, B]), (i/2 pi) circle-integral of tr(I_B(lam) d/dlam I_A(lam)))."""
    lhs = b_trace(A @ B - B @ A, reg)
    fa, fb = IndicialFamily(A.kernel, A.fiber), IndicialFamily(B.kernel, B.fiber)
    prev = None
    n = n_nodes
    while n <= max_nodes:
        vals = np.einsum("nij,nji->n", fb.on_grid(n), fa.derivative_on_grid(n))
        rhs = complex(1j * np.mean(vals))  # (i / 2 pi) * (2 pi / n) * sum
        if prev is not None and abs(rhs - prev) < tol:
            return lhs, rhs
        prev, n = rhs, 2 * n
    raise ConvergenceError("dual-circle quadrature of the commutator defect did not converge")


def _trace_norm(M) -> float:
    return float(np.sum(np.linalg.svd(M, compute_uv=False)))


def _op_norm(M) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


def triple_norm(P, reg: RegularizationData) -> float:
    """sqrt(|chi P|_1^2 + |phi [V,P]|_1^2 + |[V,P]|_1^2 + |[phi,P]|^2 + |P|^2) on the trusted window."""
    M = P.matrix if isinstance(P, BKernel) else np.asarray(P)
    g = reg.geometry
    d = g.fiber
    chi = np.repeat(reg.chi(), d)
    phi = np.repeat(reg.phi(reg.sites), d)
    W = _window(M, reg)
    VP = _window(lie_derivative(M, g), reg)
    terms = [_trace_norm(chi[:, None] * W) ** 2,
             _trace_norm(phi[:, None] * VP) ** 2,
             _trace_norm(VP) ** 2,
             _op_norm(phi[:, None] * W - W * phi[None, :]) ** 2,
             _op_norm(W) ** 2]
    return float(np.sqrt(sum(terms)))


def triple_norm_k(op, k: float, reg: RegularizationData, group: GroupSpec | None = None) -> float:
    """sqrt(sum_g |||P(g)|||^2 (1 + |g|)^{2k}) for a map g -> block (or an EquivariantOperator)."""
    blocks = op.blocks if hasattr(op, "blocks") else op
    group = group or getattr(op, "group")
    total = 0.0
    for g in sorted(blocks):
        total += triple_norm(blocks[g], reg) ** 2 * (1 + group.word_length(g)) ** (2 * k)
    return float(np.sqrt(total))


def fiber_weight_decay(family: IndicialFamily, m: int = 0, n_nodes: int = 256) -> tuple[float, np.ndarray]:
    """Fit nu_m(fiber)^2 <= C / (1 + lam^2) over lam in (-pi, pi]; returns (C, lam-grid ratios).

    nu_m is the Frobenius norm weighted by (1 + |n|)^m on the kernel, evaluated fiberwise as
    the norm of sum_n (1+|n|)^m K(n) e^{-i lam n}.
    """
    weighted = IndicialFamily({n: (1 + abs(n)) ** m * v for n, v in family.kernel.items()}, family.dim)
    lam = 2 * np.pi * np.arange(n_nodes) / n_nodes - np.pi
    vals = np.array([np.linalg.norm(weighted(x)) ** 2 for x in lam])
    ratios = vals * (1 + lam ** 2)
    return float(np.max(ratios)), ratios
