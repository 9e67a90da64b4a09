"""Cyclic and relative cyclic cochains as evaluators, Chern character pairings and the
transgression integral along idempotent paths.

Algebra elements are anything supporting ``@``, ``+`` and scalar ``*`` (dense arrays,
or the Gamma-decorated operators of :mod:`higher_aps.higher_cocycles`).  The adjoined
unit is carried by :class:`UnitalElement`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, IdempotencyError

log = logging.getLogger(__name__)

IDEMPOTENCY_TOL = 1e-10
IDEMPOTENCY_ABORT = 1e-6


def const_chern(degree: int) -> float:
    """(-1)^p (2p)!/p! for degree 2p."""
    if degree % 2:
        raise ConfigError(f"Chern constant needs an even degree, got {degree}")
    p = degree // 2
    return (-1) ** p * math.factorial(2 * p) / math.factorial(p)


def stable_sum(values) -> complex:
    """Order-fixed compensated sum of complex numbers."""
    values = [complex(v) for v in values]
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


@dataclass(frozen=True)
class UnitalElement:
    body: object
    scalar: complex = 0.0

    def __matmul__(self, other: "UnitalElement") -> "UnitalElement":
        other = as_unital(other)
        return UnitalElement(self.body @ other.body + self.body * other.scalar + other.body * self.scalar,
                             self.scalar * other.scalar)

    def __add__(self, other):
        other = as_unital(other)
        return UnitalElement(self.body + other.body, self.scalar + other.scalar)

    def __sub__(self, other):
        other = as_unital(other)
        return UnitalElement(self.body - other.body, self.scalar - other.scalar)

    def __mul__(self, s):
        return UnitalElement(self.body * s, self.scalar * s)

    __rmul__ = __mul__

    def shift(self, s) -> "UnitalElement":
        """self + s·1."""
        return UnitalElement(self.body, self.scalar + s)

    def materialize(self) -> np.ndarray:
        body = np.asarray(self.body)
        return body + self.scalar * np.eye(body.shape[0]) if self.scalar else body


def as_unital(x) -> UnitalElement:
    return x if isinstance(x, UnitalElement) else UnitalElement(x, 0.0)


def unit_like(x) -> UnitalElement:
    body = as_unital(x).body
    return UnitalElement(body * 0.0, 1.0)


def commutator(a, b) -> UnitalElement:
    a, b = as_unital(a), as_unital(b)
    return (a @ b) - (b @ a)


@dataclass(frozen=True)
class CyclicCochain:
    degree: int
    evaluate: Callable
    normalized: bool = True
    name: str = ""

    def __call__(self, *args):
        if len(args) != self.degree + 1:
            raise ConfigError(f"cochain of degree {self.degree} called with {len(args)} arguments")
        return self.evaluate(*(as_unital(a) for a in args))

    def __add__(self, other: "CyclicCochain") -> "CyclicCochain":
        if other.degree != self.degree:
            raise ConfigError("adding cochains of different degree")
        return CyclicCochain(self.degree, lambda *a: self(*a) + other(*a),
                             self.normalized and other.normalized, f"{self.name}+{other.name}")

    def __mul__(self, s) -> "CyclicCochain":
        return CyclicCochain(self.degree, lambda *a: s * self(*a), self.normalized, f"{s}*{self.name}")

    __rmul__ = __mul__

    def pullback(self, hom: Callable) -> "CyclicCochain":
        """I^*phi(a_0..a_k) = phi(I a_0, .., I a_k); I extended unitally."""
        def lift(a):
            a = as_unital(a)
            return UnitalElement(hom(a.body), a.scalar)
        return CyclicCochain(self.degree, lambda *a: self(*(lift(x) for x in a)), self.normalized,
                             f"I*{self.name}")


def zero_cochain(degree: int) -> CyclicCochain:
    return CyclicCochain(degree, lambda *a: 0.0, True, "0")


def hochschild_b(phi: CyclicCochain) -> CyclicCochain:
    k = phi.degree

    def b_phi(*a):
        total = []
        for i in range(k + 1):
            merged = a[:i] + (a[i] @ a[i + 1],) + a[i + 2:]
            total.append((-1) ** i * phi(*merged))
        total.append((-1) ** (k + 1) * phi(a[k + 1] @ a[0], *a[1:k + 1]))
        return stable_sum(total)

    return CyclicCochain(k + 1, b_phi, phi.normalized, f"b({phi.name})")


def connes_B(phi: CyclicCochain) -> CyclicCochain:
    """(B phi)(a_0..a_{k-1}) = sum_j (-1)^{(k-1)j} phi(1, a_j, .., a_{k-1}, a_0, .., a_{j-1})."""
    k = phi.degree
    if k == 0:
        raise ConfigError("B lowers degree; degree-0 cochains have no B image")

    def B_phi(*a):
        one = unit_like(a[0])
        return stable_sum((-1) ** ((k - 1) * j) * phi(one, *a[j:], *a[:j]) for j in range(k))

    return CyclicCochain(k - 1, B_phi, True, f"B({phi.name})")


# --- mixed-degree cochains and the relative cone -------------------------------------

MixedCochain = dict  # degree -> CyclicCochain


def _accumulate(out: dict, c: CyclicCochain):
    out[c.degree] = out[c.degree] + c if c.degree in out else c


def b_plus_B(mixed: MixedCochain) -> MixedCochain:
    out: dict = {}
    for k in sorted(mixed):
        _accumulate(out, hochschild_b(mixed[k]))
        if k > 0:
            _accumulate(out, connes_B(mixed[k]))
    return out


def evaluate_mixed(mixed: MixedCochain, args) -> complex:
    c = mixed.get(len(args) - 1)
    return 0.0 if c is None else c(*args)


@dataclass(frozen=True)
class RelativeCochain:
    """(tau, sigma) in CC(A) + CC(G)[1]; ``hom`` realizes I: A -> G on bodies."""

    tau: MixedCochain
    sigma: MixedCochain
    hom: Callable = field(default=lambda x: x)

    @classmethod
    def homogeneous(cls, tau: CyclicCochain, sigma: CyclicCochain, hom) -> "RelativeCochain":
        if sigma.degree != tau.degree + 1:
            raise ConfigError("relative cochain needs deg sigma = deg tau + 1")
        return cls({tau.degree: tau}, {sigma.degree: sigma}, hom)


def relative_differential(r: RelativeCochain) -> RelativeCochain:
    """(tau, sigma) -> ((b+B)tau - I^*sigma, -(b+B)sigma)."""
    tau = b_plus_B(r.tau)
    for k, s in r.sigma.items():
        _accumulate(tau, -1.0 * s.pullback(r.hom))
    sigma = {k: -1.0 * c for k, c in b_plus_B(r.sigma).items()}
    return RelativeCochain(tau, sigma, r.hom)


def relative_residual(r: RelativeCochain, tuples_a, tuples_g) -> float:
    """Largest |component| of the cone differential of r on the given argument tuples."""
    d = relative_differential(r)
    worst = 0.0
    for args in tuples_a:
        worst = max(worst, abs(evaluate_mixed(d.tau, args)))
    for args in tuples_g:
        worst = max(worst, abs(evaluate_mixed(d.sigma, args)))
    return worst


# --- test cochains ---------------------------------------------------------------------


def random_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian matrix scaled to spectral norm 1, so residuals are on an absolute scale."""
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return X / np.linalg.norm(X, 2)


def random_unital(dim: int, rng: np.random.Generator, with_scalar: bool = True) -> UnitalElement:
    w = complex(rng.normal(), rng.normal()) / np.sqrt(2) if with_scalar else 0.0
    return UnitalElement(random_matrix(dim, rng), w)


def random_normalized_cochain(degree: int, dim: int, rng: np.random.Generator) -> CyclicCochain:
    """phi(a_0..a_k) = tr(a_0 M_0 a_1 M_1 .. a_k M_k) + w_0 tr(N_0 a_1 N_1 .. a_k N_k).

    Multilinear in the bodies, and zero when any a_i (i >= 1) is the unit, since only bodies
    of those slots enter.  The scalar of a_0 is w_0.
    """
    def mat():
        return random_matrix(dim, rng)

    Ms = [mat() for _ in range(degree + 1)]
    Ns = [mat() for _ in range(degree + 1)]

    def phi(*a):
        prod = a[0].body @ Ms[0]
        tail = Ns[0]
        for i in range(1, degree + 1):
            prod = prod @ a[i].body @ Ms[i]
            tail = tail @ a[i].body @ Ns[i]
        return np.trace(prod) + a[0].scalar * np.trace(tail)

    return CyclicCochain(degree, phi, True, f"random{degree}")


def trace_cochain() -> CyclicCochain:
    """Degree-0 matrix trace on bodies; the adjoined unit has no finite trace."""
    def tr(a):
        if a.scalar != 0:
            raise ConfigError("the trace of the adjoined unit is undefined; pair differences instead")
        return np.trace(np.asarray(a.body))
    return CyclicCochain(0, tr, True, "trace")


# --- pairings -------------------------------------------------------------------------


def _body_norm(x) -> float:
    if hasattr(x, "norm"):
        return float(x.norm())
    return float(np.linalg.norm(np.asarray(x)))


def idempotency_residual(p) -> float:
    p = as_unital(p)
    q = p @ p - p
    return _body_norm(q.body) + abs(q.scalar)


def _certify_idempotent(p, what: str, warnings: list | None = None):
    res = idempotency_residual(p)
    if res > IDEMPOTENCY_ABORT:
        raise IdempotencyError(f"{what} is not idempotent (residual {res:.3g})")
    if res > IDEMPOTENCY_TOL:
        msg = f"{what} idempotency residual {res:.3g} above {IDEMPOTENCY_TOL:g}"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
    return res


def chern_component(P, tau: CyclicCochain) -> complex:
    """const_{2n} tau(P - 1/2, P, .., P) for tau of degree 2n."""
    P = as_unital(P)
    return const_chern(tau.degree) * tau(P.shift(-0.5), *([P] * tau.degree))


def chern_difference(P, Q, tau: CyclicCochain) -> complex:
    """Degree-2n part of <Ch(P) - Ch(Q), tau>.

    In degree 0 the two 1/2-shifts cancel by linearity, so tau(P) - tau(Q) is used and the
    adjoined unit never has to be traced.
    """
    if tau.degree == 0:
        return tau(P) - tau(Q)
    return chern_component(P, tau) - chern_component(Q, tau)


def chern_pair(P, Q, tau, check: bool = True) -> complex:
    """<Ch(P) - Ch(Q), tau>; ``tau`` may be a single cochain or a mixed-degree dict."""
    if check:
        _certify_idempotent(P, "P")
        _certify_idempotent(Q, "Q")
    mixed = tau if isinstance(tau, dict) else {tau.degree: tau}
    return stable_sum(chern_difference(P, Q, c) for k, c in sorted(mixed.items()) if k % 2 == 0)


@dataclass
class QuadratureResult:
    value: complex
    error: float
    converged: bool
    nodes: int
    warnings: list = field(default_factory=list)


def simpson_richardson(f: Callable[[float], complex], a: float, b: float, tol: float = 1e-8,
                       n0: int = 8, max_level: int = 9) -> QuadratureResult:
    """Composite Simpson, doubling the panel count until successive Richardson values agree."""
    cache: dict = {}

    def F(x):
        if x not in cache:
            cache[x] = complex(f(x))
        return cache[x]

    def simpson(n):
        xs = np.linspace(a, b, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2], w[2:-1:2] = 4, 2
        h = (b - a) / n
        return h / 3 * stable_sum(wi * F(float(x)) for wi, x in zip(w, xs))

    n = n0
    prev = simpson(n)
    prev_rich, change = None, float("inf")
    for _ in range(max_level):
        n *= 2
        cur = simpson(n)
        rich = cur + (cur - prev) / 15
        if prev_rich is not None:
            change = abs(rich - prev_rich)
            if change < tol:
                return QuadratureResult(rich, change, True, len(cache))
        prev, prev_rich = cur, rich
    return QuadratureResult(prev_rich, change, False, len(cache), ["Simpson refinement cap reached"])


@dataclass
class IdempotentPath:
    """s -> p_s on [0, 1]; derivative analytic when given, else fourth-order differences."""

    value: Callable[[float], object]
    derivative: Callable[[float], object] | None = None
    fd_step: float = 1e-3

    def __call__(self, s):
        return as_unital(self.value(s))

    def deriv(self, s: float) -> UnitalElement:
        if self.derivative is not None:
            return as_unital(self.derivative(s))
        h = self.fd_step
        f = lambda x: as_unital(self.value(x))
        if 2 * h <= s <= 1 - 2 * h:
            return (f(s - 2 * h) - f(s - h) * 8 + f(s + h) * 8 - f(s + 2 * h)) * (1 / (12 * h))
        sgn = 1 if s < 0.5 else -1
        v = [f(s + sgn * j * h) for j in range(5)]
        d = (v[0] * -25 + v[1] * 48 - v[2] * 36 + v[3] * 16 - v[4] * 3) * (1 / (12 * h))
        return d * sgn

    def reversed(self) -> "IdempotentPath":
        d = None if self.derivative is None else (lambda s: as_unital(self.derivative(1 - s)) * -1)
        return IdempotentPath(lambda s: self.value(1 - s), d, self.fd_step)

    @classmethod
    def constant(cls, p) -> "IdempotentPath":
        zero = as_unital(p) * 0.0
        return cls(lambda s: p, lambda s: zero)


def transgression_integrand(path: IdempotentPath, sigma: CyclicCochain, s: float,
                            warnings: list | None = None) -> complex:
    if sigma.degree % 2 == 0:
        raise ConfigError("transgression needs an odd-degree cochain")
    p = path(s)
    _certify_idempotent(p, f"path value at s={s:.6g}", warnings)
    com = commutator(path.deriv(s), p)
    n = sigma.degree  # = 2p + 1 slots after the first
    terms = []
    for i in range(n):
        args = [p] * (n + 1)
        args[i] = com
        terms.append(sigma(*args))
    return stable_sum(terms)


def transgression_pair(path: IdempotentPath, sigma: CyclicCochain, tol: float = 1e-8,
                       n0: int = 8, max_level: int = 9) -> QuadratureResult:
    warnings: list = []
    res = simpson_richardson(lambda s: transgression_integrand(path, sigma, s, warnings), 0.0, 1.0,
                             tol=tol, n0=n0, max_level=max_level)
    res.warnings.extend(sorted(set(warnings)))
    return res


@dataclass
class RelativeKTriple:
    """(e_1, e_0, p) with I(e_0) = p(0) and I(e_1) = p(1) up to the certified residuals."""

    e1: object
    e0: object
    path: IdempotentPath
    endpoint_residuals: tuple = (0.0, 0.0)


def relative_pair(triple: RelativeKTriple, r: RelativeCochain, quad: dict | None = None,
                  endpoint_tol: float = 1e-8) -> QuadratureResult:
    """const_{2p} [tau(e_1) - tau(e_0) - sum_i int sigma(p, .., [p', p]_i, .., p)].

    The absolute part uses the same (e - 1/2) first slot as :func:`chern_pair`; the two
    agree whenever tau(1, e, .., e) vanishes, as it does for the group-cocycle traces.
    """
    if len(r.tau) != 1 or len(r.sigma) != 1:
        raise ConfigError("relative_pair needs homogeneous (tau, sigma)")
    (k, tau), = r.tau.items()
    (ks, sigma), = r.sigma.items()
    if k % 2 or ks != k + 1:
        raise ConfigError(f"degrees do not match: tau {k}, sigma {ks}")
    if max(triple.endpoint_residuals) > endpoint_tol:
        raise ConfigError(f"endpoint certificate failed: {triple.endpoint_residuals}")
    absolute = chern_difference(triple.e1, triple.e0, tau)
    tr = transgression_pair(triple.path, sigma, **(quad or {}))
    c = const_chern(k)
    return QuadratureResult(absolute - c * tr.value, abs(c) * tr.error, tr.converged, tr.nodes, tr.warnings)


def excision_triple(P, Q, hom: Callable = lambda x: x) -> RelativeKTriple:
    """Absolute pair (P, Q) over the ideal seen as a relative class with the constant path."""
    img = as_unital(Q)
    img = UnitalElement(hom(img.body), img.scalar)
    return RelativeKTriple(P, Q, IdempotentPath.constant(img))
