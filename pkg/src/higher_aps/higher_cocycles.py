"""Group-cocycle traces on Gamma-decorated operators.

An operator on a Gamma-covering is stored by its blocks g -> S(g) and composed by
convolution, (S T)(g) = sum_h S(h) T(h^-1 g).  Blocks come in three classes:

* ``J``: residual slab operators or dense matrices of a closed model (honest trace),
* ``A``: slab operators with a translation-invariant part (regularized trace),
* ``G``: translation-invariant cylinder operators as fibers over the dual circle.

The cocycles are

    tau_c(S_0..S_k)   = sum_{g_0..g_k = 1} Tr (S_0(g_0) .. S_k(g_k)) c(g_1..g_k)
    tau^r_c           = the same with bTr
    sigma_c(B_0..B_{k+1}) = (-1)^{k+1} sum_{g_0..g_{k+1} = 1}
                           (i/2pi) circle-int Tr (B_0(g_0) .. B_k(g_k) d/dlam B_{k+1}(g_{k+1})) c(g_1..g_k)

A scalar w on the first argument is the adjoined unit placed at g_0 = 1.  Scalars on the
other arguments only meet c at a slot equal to the identity, where a normalized c vanishes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .b_trace import RegularizationData, SlabOperator, b_trace, triple_norm_k, fiber_weight_decay
from .cyclic_homology import CyclicCochain, RelativeCochain, relative_residual, stable_sum
from .errors import ConfigError, PreconditionError
from .group_cohomology import GroupCochain, nhom_delta
from .group_core import GroupSpec
from .lattice_models import BKernel, FiberField, IndicialFamily, SlabGeometry

CLASSES = ("J", "A", "G")
COCYCLE_TOL = 1e-12


def _block_norm(b) -> float:
    if hasattr(b, "norm"):
        return float(b.norm())
    return float(np.max(np.abs(b), initial=0.0))


@dataclass
class EquivariantOperator:
    group: GroupSpec
    blocks: dict
    cls: str = "A"

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ConfigError(f"class tag must be one of {CLASSES}")

    @classmethod
    def single(cls, group: GroupSpec, block, tag: str = "A", g=None) -> "EquivariantOperator":
        return cls(group, {group.identity if g is None else g: block}, tag)

    def _check(self, other: "EquivariantOperator"):
        if other.group != self.group:
            raise ConfigError("operators over different groups")
        if "G" in (self.cls, other.cls) and self.cls != other.cls:
            raise ConfigError("indicial-class operators only combine with each other")

    def _tag(self, other) -> str:
        return "J" if "J" in (self.cls, other.cls) else self.cls

    def __matmul__(self, other: "EquivariantOperator") -> "EquivariantOperator":
        self._check(other)
        out: dict = {}
        for g, a in self.blocks.items():
            for h, b in other.blocks.items():
                k = self.group.mul(g, h)
                out[k] = a @ b if k not in out else out[k] + a @ b
        return EquivariantOperator(self.group, out, self._tag(other))

    def __add__(self, other: "EquivariantOperator") -> "EquivariantOperator":
        self._check(other)
        out = dict(self.blocks)
        for g, b in other.blocks.items():
            out[g] = out[g] + b if g in out else b
        tag = "J" if self.cls == other.cls == "J" else ("G" if self.cls == "G" else "A")
        return EquivariantOperator(self.group, out, tag)

    def __mul__(self, s) -> "EquivariantOperator":
        return EquivariantOperator(self.group, {g: b * s for g, b in self.blocks.items()}, self.cls)

    __rmul__ = __mul__

    def __sub__(self, other: "EquivariantOperator") -> "EquivariantOperator":
        return self + other * -1.0

    def norm(self) -> float:
        return max((_block_norm(b) for b in self.blocks.values()), default=0.0)

    def indicial(self, n_nodes: int) -> "EquivariantOperator":
        """I: A -> G, blockwise; residual blocks map to zero."""
        if self.cls == "G":
            return self
        out = {}
        for g, b in self.blocks.items():
            fib = _indicial_block(b, n_nodes)
            if fib is not None:
                out[g] = fib
        return EquivariantOperator(self.group, out, "G")


def _indicial_block(b, n_nodes: int):
    if isinstance(b, BKernel):
        if not b.kernel:
            return None
        return FiberField.from_kernel(b.kernel, b.fiber, n_nodes)
    if isinstance(b, SlabOperator):
        return b.indicial
    if isinstance(b, FiberField):
        return b
    raise PreconditionError(f"no indicial map for block type {type(b).__name__}")


def _blocks(x, group: GroupSpec) -> dict:
    if isinstance(x, EquivariantOperator):
        return x.blocks
    return {group.identity: x}


# --- constrained group sums -----------------------------------------------------------------------


def _identity_block_like(example):
    if isinstance(example, FiberField):
        return FiberField.identity(example.dim, example.n_nodes)
    raise PreconditionError("the adjoined unit can only be traced against fiber families here")


def _constrained_sum(group: GroupSpec, slots: list, weight: Callable, trace: Callable) -> complex:
    """sum over g_0..g_n with g_0 g_1 .. g_n = 1 of trace(S_0(g_0) .. S_n(g_n)) weight(g_1..g_n).

    Loops over g_1..g_n and looks g_0 up in the first slot's support.
    """
    first = slots[0]
    terms = []
    rest = [sorted(s.items(), key=lambda kv: repr(kv[0])) for s in slots[1:]]
    for combo in itertools.product(*rest):
        gs = tuple(g for g, _ in combo)
        g0 = group.inv(group.prod(gs))
        if g0 not in first:
            continue
        w = weight(gs)
        if w == 0:
            continue
        prod = first[g0]
        for _, blk in combo:
            prod = prod @ blk
        terms.append(w * trace(prod))
    return stable_sum(terms)


def _dense_constrained_sum(group: GroupSpec, slots: list, weight: Callable) -> complex:
    """Vectorized variant of :func:`_constrained_sum` for dense-matrix blocks (last slot batched)."""
    first = slots[0]
    last_keys = sorted(slots[-1], key=repr)
    if not last_keys or not first:
        return 0.0
    last_stack = np.stack([slots[-1][g] for g in last_keys])
    middle = [sorted(s.items(), key=lambda kv: repr(kv[0])) for s in slots[1:-1]]
    terms = []
    for combo in itertools.product(*middle):
        gs = tuple(g for g, _ in combo)
        head = group.prod(gs)
        idx, keep, ws = [], [], []
        for j, g in enumerate(last_keys):
            g0 = group.inv(group.mul(head, g))
            if g0 in first:
                w = weight(gs + (g,))
                if w != 0:
                    idx.append(g0)
                    keep.append(j)
                    ws.append(w)
        if not keep:
            continue
        left = None
        for _, blk in combo:
            left = blk if left is None else left @ blk
        tail = last_stack[keep] if left is None else left @ last_stack[keep]
        heads = np.stack([first[g0] for g0 in idx])
        traces = np.einsum("sij,sji->s", heads, tail)
        terms.extend(np.asarray(ws) * traces)
    return stable_sum(terms)


def _evaluate(group: GroupSpec, args: tuple, c: GroupCochain, trace: Callable, weight_slots: int,
              transform_last: Callable | None = None) -> complex:
    """Shared evaluator: the unital first slot is split into its body and its scalar."""
    bodies = [_blocks(a.body, group) for a in args]
    if transform_last is not None:
        bodies[-1] = {g: transform_last(b) for g, b in bodies[-1].items()}
    k = len(args) - 1
    weight = (lambda gs: c(*gs[:weight_slots])) if weight_slots else (lambda gs: c())
    dense = all(isinstance(b, np.ndarray) for s in bodies for b in s.values())
    total = []
    if k == 0:
        total.append(stable_sum(trace(b) for g, b in bodies[0].items() if group.is_identity(g)))
    elif dense:
        total.append(_dense_constrained_sum(group, bodies, weight))
    else:
        total.append(_constrained_sum(group, bodies, weight, trace))
    w0 = args[0].scalar
    if w0:
        if k == 0:
            raise PreconditionError("the adjoined unit has no trace in degree 0; pair differences instead")
        example = next((b for s in bodies[1:] for b in s.values()), None)
        if example is not None:
            unit = {group.identity: _identity_block_like(example)} if isinstance(example, FiberField) else None
            if unit is None:
                # tau(1, S_1..S_k): drop the first slot and sum over g_1..g_k = 1
                total.append(w0 * _evaluate_without_first(group, bodies[1:], weight, trace))
            else:
                total.append(w0 * _constrained_sum(group, [unit] + bodies[1:], weight, trace))
    return stable_sum(total)


def _evaluate_without_first(group, slots, weight, trace) -> complex:
    """sum over g_1..g_k = 1 of trace(S_1(g_1)..S_k(g_k)) weight(g_1..g_k)."""
    head, rest = slots[0], slots[1:]
    # shift so that the first remaining slot plays the role of the looked-up one
    terms = []
    for combo in itertools.product(*[sorted(s.items(), key=lambda kv: repr(kv[0])) for s in rest]):
        gs = tuple(g for g, _ in combo)
        g1 = group.inv(group.prod(gs))
        if g1 not in head:
            continue
        w = weight((g1,) + gs)
        if w == 0:
            continue
        prod = head[g1]
        for _, blk in combo:
            prod = prod @ blk
        terms.append(w * trace(prod))
    return stable_sum(terms)


def _require_normalized(c: GroupCochain):
    if c.degree > 0 and not c.normalized:
        raise PreconditionError(f"cocycle {c.name!r} must be normalized")


def _ideal_trace(reg: RegularizationData | None) -> Callable:
    def tr(block):
        if isinstance(block, np.ndarray):
            return np.trace(block)
        if isinstance(block, BKernel):
            if block.kernel:
                raise PreconditionError("tau_c needs residual (J-class) blocks; use tau_r_c for b-operators")
            if reg is None:
                return np.trace(block.matrix)
            g = reg.geometry
            idx = np.arange((-reg.window - g.t_min) * g.fiber, g.dim)
            return np.trace(block.matrix[np.ix_(idx, idx)])
        raise PreconditionError(f"cannot trace block of type {type(block).__name__}")
    return tr


def _regularized_trace(reg: RegularizationData | None) -> Callable:
    def tr(block):
        if isinstance(block, np.ndarray):
            return np.trace(block)
        if reg is None:
            raise PreconditionError("regularized trace needs RegularizationData")
        return b_trace(block, reg)
    return tr


def tau_c(c: GroupCochain, reg: RegularizationData | None = None) -> CyclicCochain:
    _require_normalized(c)
    tr = _ideal_trace(reg)
    return CyclicCochain(c.degree, lambda *a: _evaluate(c.group, a, c, tr, c.degree),
                         True, f"tau[{c.name}]")


def tau_r_c(c: GroupCochain, reg: RegularizationData | None) -> CyclicCochain:
    _require_normalized(c)
    tr = _regularized_trace(reg)
    return CyclicCochain(c.degree, lambda *a: _evaluate(c.group, a, c, tr, c.degree),
                         True, f"tau_r[{c.name}]")


def _circle_trace(block: FiberField) -> complex:
    return 1j / (2 * np.pi) * block.circle_trace()


def sigma_c(c: GroupCochain) -> CyclicCochain:
    _require_normalized(c)
    k = c.degree
    sign = (-1) ** (k + 1)

    def sigma(*a):
        if any(not isinstance(b, FiberField) for x in a for b in _blocks(x.body, c.group).values()):
            raise PreconditionError("sigma_c acts on fiber families (G-class)")
        return sign * _evaluate(c.group, a, c, _circle_trace, k, transform_last=lambda b: b.lam_derivative())

    return CyclicCochain(k + 1, sigma, True, f"sigma[{c.name}]")


def check_cocycle(c: GroupCochain, rng: np.random.Generator, n: int = 50, radius: int = 3) -> float:
    """Largest |delta c| over random tuples."""
    d = nhom_delta(c)
    G = c.group
    worst = 0.0
    for _ in range(n):
        gs = tuple(G.random_element(rng, radius) for _ in range(c.degree + 1))
        worst = max(worst, abs(complex(d(*gs))))
    return worst


def relative_cocycle(c: GroupCochain, reg: RegularizationData | None, n_nodes: int = 64,
                     rng: np.random.Generator | None = None) -> RelativeCochain:
    """(tau^r_c, sigma_c) with the indicial map sampled on ``n_nodes`` points of the dual circle."""
    if c.degree > 0:
        res = check_cocycle(c, rng or np.random.default_rng(0))
        if res > COCYCLE_TOL:
            raise PreconditionError(f"{c.name!r} fails the sampled cocycle test (|delta c| = {res:.3g})")

    def hom(body):
        if isinstance(body, EquivariantOperator):
            return body.indicial(n_nodes)
        return _indicial_block(body, n_nodes)

    return RelativeCochain.homogeneous(tau_r_c(c, reg), sigma_c(c), hom)


def relative_cocycle_residual(r: RelativeCochain, tuples_a, tuples_g) -> float:
    return relative_residual(r, tuples_a, tuples_g)


# --- random test operators --------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomOperatorSpec:
    """Shape of random A-class test operators on a small slab."""

    depth: int = 24
    interior: int = 2
    fiber: int = 2
    kernel_support: int = 1
    residual_depth: int = 3
    group_radius: int = 1
    n_blocks: int = 3
    scale: float = 0.5


def random_kernel(rng, dim: int, support: int, scale: float) -> dict:
    return {n: scale * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / (2 * dim)
            for n in range(-support, support + 1)}


def random_residual(rng, geom: SlabGeometry, depth: int, scale: float) -> np.ndarray:
    """Random block supported on sites t >= -depth (both indices)."""
    sites = geom.site_of_index()
    mask = (sites >= -depth).astype(float)
    X = rng.normal(size=(geom.dim,) * 2) + 1j * rng.normal(size=(geom.dim,) * 2)
    return scale * X * np.outer(mask, mask) / (2 * geom.fiber * (depth + geom.interior + 1))


def random_a_operator(group: GroupSpec, rng: np.random.Generator, spec: RandomOperatorSpec = RandomOperatorSpec(),
                      cls: str = "A") -> EquivariantOperator:
    geom = SlabGeometry(spec.depth, spec.interior, spec.fiber)
    ball = group.ball(spec.group_radius)
    picks = rng.choice(len(ball), size=min(spec.n_blocks, len(ball)), replace=False)
    blocks = {}
    for i in sorted(picks):
        kern = {} if cls == "J" else random_kernel(rng, spec.fiber, spec.kernel_support, spec.scale)
        blocks[ball[i]] = BKernel.from_kernel(kern, geom, random_residual(rng, geom, spec.residual_depth, spec.scale),
                                              window=spec.depth - 10)
    return EquivariantOperator(group, blocks, cls)


def random_g_operator(group: GroupSpec, rng: np.random.Generator, n_nodes: int = 64,
                      spec: RandomOperatorSpec = RandomOperatorSpec()) -> EquivariantOperator:
    ball = group.ball(spec.group_radius)
    picks = rng.choice(len(ball), size=min(spec.n_blocks, len(ball)), replace=False)
    blocks = {ball[i]: FiberField.from_kernel(random_kernel(rng, spec.fiber, spec.kernel_support, spec.scale),
                                              spec.fiber, n_nodes) for i in sorted(picks)}
    return EquivariantOperator(group, blocks, "G")


def sample_regularization(spec: RandomOperatorSpec = RandomOperatorSpec(), offset: int = 2) -> RegularizationData:
    return RegularizationData(SlabGeometry(spec.depth, spec.interior, spec.fiber), spec.depth - 10, offset)


# --- extendability diagnostics -------------------------------------------------------------------


@dataclass
class ExtendabilityReport:
    value: complex
    norm_product: float
    ratio: float
    fiber_decay_constants: list = field(default_factory=list)


def extendability_diagnostics(args, c: GroupCochain, m: float, reg: RegularizationData) -> ExtendabilityReport:
    """|tau^r_c(args)| against the product of weighted triple norms, plus fiber decay fits."""
    value = tau_r_c(c, reg)(*args)
    norms = [triple_norm_k(a, m, reg) for a in args]
    prod = float(np.prod(norms))
    decay = []
    for a in args:
        for g in sorted(a.blocks, key=repr):
            b = a.blocks[g]
            if isinstance(b, BKernel) and b.kernel:
                decay.append(fiber_weight_decay(IndicialFamily(b.kernel, b.fiber), int(m))[0])
    return ExtendabilityReport(complex(value), prod, abs(value) / prod if prod else 0.0, decay)


def support_growth_sweep(c: GroupCochain, radii, rng: np.random.Generator, m: float = 1.0,
                         spec: RandomOperatorSpec = RandomOperatorSpec()) -> list:
    """Ratio |tau^r_c| / prod |||.|||_m for tuples whose blocks spread over growing balls."""
    reg = sample_regularization(spec)
    out = []
    for r in radii:
        s = RandomOperatorSpec(**{**spec.__dict__, "group_radius": r, "n_blocks": 2 * r + 1})
        args = [random_a_operator(c.group, rng, s) for _ in range(c.degree + 1)]
        out.append(extendability_diagnostics(args, c, m, reg).ratio)
    return out
