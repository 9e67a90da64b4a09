"""Discrete groups with word metrics and finitely supported group-algebra elements.

Three kinds of group are supported:

* ``free_abelian(k)``: elements are integer tuples of length k, word length is the l1 norm.
* ``finite(table, generators)``: elements are indices into a multiplication table,
  word length is the Cayley-graph distance from the declared generators.
* ``free(r)``: elements are reduced words, stored as tuples of nonzero ints
  (letter ``+i`` is generator i, ``-i`` its inverse); word length is the word length.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Hashable, Iterable

import numpy as np

from .errors import ConfigError, PreconditionError

DROP_TOL = 1e-14


@dataclass(frozen=True)
class GroupSpec:
    kind: str  # "free_abelian" | "finite" | "free"
    rank: int = 0
    table: tuple[tuple[int, ...], ...] | None = None
    generators: tuple[Hashable, ...] = ()

    def __post_init__(self):
        if self.kind not in ("free_abelian", "finite", "free"):
            raise ConfigError(f"unknown group kind {self.kind!r}")
        if self.kind == "finite":
            if self.table is None:
                raise ConfigError("finite group needs a multiplication table")
            n = len(self.table)
            if any(len(row) != n for row in self.table):
                raise ConfigError("multiplication table must be square")

    # --- structure -------------------------------------------------------
    @property
    def identity(self):
        if self.kind == "free_abelian":
            return (0,) * self.rank
        if self.kind == "free":
            return ()
        return self._finite_identity

    @cached_property
    def _finite_identity(self) -> int:
        n = len(self.table)
        for e in range(n):
            if all(self.table[e][g] == g and self.table[g][e] == g for g in range(n)):
                return e
        raise ConfigError("multiplication table has no identity")

    @cached_property
    def _finite_inverse(self) -> tuple[int, ...]:
        e = self._finite_identity
        n = len(self.table)
        inv = []
        for g in range(n):
            hits = [h for h in range(n) if self.table[g][h] == e]
            if not hits:
                raise ConfigError(f"element {g} has no inverse")
            inv.append(hits[0])
        return tuple(inv)

    def mul(self, g, h):
        if self.kind == "free_abelian":
            return tuple(a + b for a, b in zip(g, h))
        if self.kind == "free":
            out = list(g)
            for x in h:
                if out and out[-1] == -x:
                    out.pop()
                else:
                    out.append(x)
            return tuple(out)
        return self.table[g][h]

    def inv(self, g):
        if self.kind == "free_abelian":
            return tuple(-a for a in g)
        if self.kind == "free":
            return tuple(-x for x in reversed(g))
        return self._finite_inverse[g]

    def prod(self, elements: Iterable):
        out = self.identity
        for g in elements:
            out = self.mul(out, g)
        return out

    def is_identity(self, g) -> bool:
        return g == self.identity

    @property
    def symmetric_generators(self) -> tuple:
        """Declared generators together with their inverses (no repeats)."""
        if self.kind == "free_abelian":
            gens = []
            for i in range(self.rank):
                v = [0] * self.rank
                v[i] = 1
                gens.append(tuple(v))
                v[i] = -1
                gens.append(tuple(v))
            return tuple(gens)
        if self.kind == "free":
            return tuple(x for i in range(1, self.rank + 1) for x in ((i,), (-i,)))
        out = []
        for g in self.generators:
            for x in (g, self.inv(g)):
                if x not in out:
                    out.append(x)
        return tuple(out)

    @cached_property
    def _finite_lengths(self) -> dict:
        e = self._finite_identity
        dist = {e: 0}
        queue = deque([e])
        gens = self.symmetric_generators
        while queue:
            g = queue.popleft()
            for s in gens:
                h = self.mul(g, s)
                if h not in dist:
                    dist[h] = dist[g] + 1
                    queue.append(h)
        if len(dist) != len(self.table):
            raise ConfigError("declared generators do not generate the finite group")
        return dist

    def word_length(self, g) -> int:
        if self.kind == "free_abelian":
            return int(sum(abs(a) for a in g))
        if self.kind == "free":
            return len(g)
        return self._finite_lengths[g]

    def ball(self, radius: int) -> list:
        """All elements of word length <= radius, in breadth-first (deterministic) order."""
        e = self.identity
        seen = {e}
        layer = [e]
        out = [e]
        gens = self.symmetric_generators
        for _ in range(radius):
            nxt = []
            for g in layer:
                for s in gens:
                    h = self.mul(g, s)
                    if h not in seen:
                        seen.add(h)
                        nxt.append(h)
            out.extend(nxt)
            layer = nxt
        return out

    def random_element(self, rng: np.random.Generator, radius: int):
        if self.kind == "free_abelian":
            # uniform over a box, then clipped into the l1 ball
            while True:
                v = tuple(int(x) for x in rng.integers(-radius, radius + 1, size=self.rank))
                if sum(abs(a) for a in v) <= radius:
                    return v
        if self.kind == "free":
            n = int(rng.integers(0, radius + 1))
            word: list[int] = []
            while len(word) < n:
                x = int(rng.integers(1, self.rank + 1)) * (1 if rng.random() < 0.5 else -1)
                if word and word[-1] == -x:
                    continue
                word.append(x)
            return tuple(word)
        elems = [g for g, d in self._finite_lengths.items() if d <= radius]
        return elems[int(rng.integers(0, len(elems)))]


def free_abelian(rank: int) -> GroupSpec:
    return GroupSpec("free_abelian", rank=rank)


def free_group(rank: int) -> GroupSpec:
    return GroupSpec("free", rank=rank)


def finite_group(table, generators) -> GroupSpec:
    table = tuple(tuple(int(x) for x in row) for row in table)
    return GroupSpec("finite", table=table, generators=tuple(int(g) for g in generators))


def cyclic_group(n: int) -> GroupSpec:
    return finite_group([[(i + j) % n for j in range(n)] for i in range(n)], [1 % n])


def trivial_group() -> GroupSpec:
    return free_abelian(0)


# --- group algebra --------------------------------------------------------------


def _magnitude(x) -> float:
    return float(np.max(np.abs(x))) if np.ndim(x) else abs(x)


@dataclass(frozen=True)
class GroupAlgebraElement:
    """Finitely supported function g -> scalar (or g -> matrix block)."""

    group: GroupSpec
    coeffs: dict = field(default_factory=dict)
    drop_tol: float = DROP_TOL

    def __post_init__(self):
        kept = {g: v for g, v in self.coeffs.items() if _magnitude(v) > self.drop_tol}
        object.__setattr__(self, "coeffs", kept)

    @classmethod
    def delta(cls, group: GroupSpec, g, value=1.0) -> "GroupAlgebraElement":
        return cls(group, {g: value})

    @property
    def support(self) -> list:
        return list(self.coeffs)

    def __getitem__(self, g):
        return self.coeffs.get(g, 0.0)

    def _check(self, other: "GroupAlgebraElement"):
        if self.group != other.group:
            raise ConfigError("group algebra elements live over different groups")

    def __add__(self, other):
        self._check(other)
        out = dict(self.coeffs)
        for g, v in other.coeffs.items():
            out[g] = out[g] + v if g in out else v
        return GroupAlgebraElement(self.group, out, self.drop_tol)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, s) -> "GroupAlgebraElement":
        return GroupAlgebraElement(self.group, {g: s * v for g, v in self.coeffs.items()}, self.drop_tol)

    def __mul__(self, other):
        return convolve(self, other)

    def support_diameter(self) -> int:
        return max((self.group.word_length(g) for g in self.coeffs), default=0)

    def distance(self, other) -> float:
        """sup-norm distance of coefficients, handy for tests."""
        diff = self - other
        return max((_magnitude(v) for v in diff.coeffs.values()), default=0.0)


def convolve(a: GroupAlgebraElement, b: GroupAlgebraElement) -> GroupAlgebraElement:
    """(a*b)(g) = sum_h a(h) b(h^-1 g); blocks are multiplied with @ when matrices."""
    a._check(b)
    G = a.group
    out: dict = {}
    for h, x in a.coeffs.items():
        for k, y in b.coeffs.items():
            g = G.mul(h, k)
            term = x @ y if np.ndim(x) and np.ndim(y) else x * y
            out[g] = out[g] + term if g in out else term
    return GroupAlgebraElement(G, out, min(a.drop_tol, b.drop_tol))


def nu_norm(a: GroupAlgebraElement, k: int) -> float:
    """(sum_g (1+|g|)^{2k} |a(g)|^2)^{1/2}; matrix blocks use the Frobenius norm."""
    total = 0.0
    for g, v in a.coeffs.items():
        w = (1.0 + a.group.word_length(g)) ** (2 * k)
        total += w * float(np.sum(np.abs(v) ** 2))
    return float(np.sqrt(total))


def left_convolution_matrix(a: GroupAlgebraElement, elements: list) -> np.ndarray:
    """Matrix of f -> a*f restricted to span{delta_x : x in elements}."""
    G = a.group
    index = {g: i for i, g in enumerate(elements)}
    M = np.zeros((len(elements), len(elements)), dtype=complex)
    for x in elements:
        j = index[x]
        for h, v in a.coeffs.items():
            g = G.mul(h, x)
            i = index.get(g)
            if i is not None:
                M[i, j] += v
    return M


def rd_diagnostic(a: GroupAlgebraElement, k: int, ball_radius: int) -> float:
    """||L_a|| on l^2 of the word ball divided by nu_k(a). Sampled evidence, not a proof."""
    if ball_radius < a.support_diameter():
        raise PreconditionError(
            f"ball radius {ball_radius} is smaller than the support diameter {a.support_diameter()}"
        )
    norm_nu = nu_norm(a, k)
    if norm_nu == 0.0:
        return 0.0
    M = left_convolution_matrix(a, a.group.ball(ball_radius))
    op = float(np.linalg.norm(M, 2))
    return op / norm_nu


def random_element(group: GroupSpec, rng: np.random.Generator, n_terms: int, radius: int,
                   value: Callable[[np.random.Generator], Any] | None = None) -> GroupAlgebraElement:
    value = value or (lambda r: complex(r.normal(), r.normal()))
    coeffs = {}
    for _ in range(n_terms):
        g = group.random_element(rng, radius)
        coeffs[g] = value(rng)
    return GroupAlgebraElement(group, coeffs)
