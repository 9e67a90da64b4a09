"""Group cochains as evaluators: differentials, homogeneous form, antisymmetrization,
built-in cocycles and the Cech form attached to a cocycle on small lattice covers."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ConfigError, PreconditionError
from .group_core import GroupSpec, free_abelian

MAX_ANTISYM_DEGREE = 6


@dataclass(frozen=True)
class GroupCochain:
    """c : Gamma^k -> C.  ``growth=(d, C)`` asserts |c(g_1..g_k)| <= C prod (1+|g_i|)^d."""

    group: GroupSpec
    degree: int
    evaluate: Callable
    normalized: bool = False
    antisymmetric_image: bool = False
    growth: tuple[int, float] | None = None
    name: str = ""

    def __call__(self, *gs):
        if len(gs) != self.degree:
            raise ConfigError(f"cochain of degree {self.degree} called with {len(gs)} arguments")
        return self.evaluate(*gs)


@dataclass(frozen=True)
class HomogeneousCochain:
    """phi : Gamma^{k+1} -> C, assumed left invariant."""

    group: GroupSpec
    degree: int
    evaluate: Callable
    name: str = ""

    def __call__(self, *gs):
        if len(gs) != self.degree + 1:
            raise ConfigError(f"homogeneous cochain of degree {self.degree} needs {self.degree + 1} arguments")
        return self.evaluate(*gs)


def nhom_delta(c: GroupCochain) -> GroupCochain:
    G, k = c.group, c.degree

    def dc(*gs):
        total = c(*gs[1:])
        for i in range(k):
            merged = gs[:i] + (G.mul(gs[i], gs[i + 1]),) + gs[i + 2:]
            total += (-1) ** (i + 1) * c(*merged)
        return total + (-1) ** (k + 1) * c(*gs[:k])

    return GroupCochain(G, k + 1, dc, name=f"delta({c.name})")


def hom_boundary(phi: HomogeneousCochain) -> HomogeneousCochain:
    """(d phi)(g_0..g_{k+1}) = sum_i (-1)^i phi(.. omit g_i ..)."""
    k = phi.degree

    def dphi(*gs):
        return sum((-1) ** i * phi(*(gs[:i] + gs[i + 1:])) for i in range(k + 2))

    return HomogeneousCochain(phi.group, k + 1, dphi, name=f"d({phi.name})")


def to_homogeneous(c: GroupCochain) -> HomogeneousCochain:
    G = c.group

    def phi(*gs):
        return c(*(G.mul(G.inv(gs[i]), gs[i + 1]) for i in range(len(gs) - 1)))

    return HomogeneousCochain(G, c.degree, phi, name=f"hom({c.name})")


def from_homogeneous(phi: HomogeneousCochain, **flags) -> GroupCochain:
    G = phi.group

    def c(*gs):
        partial = [G.identity]
        for g in gs:
            partial.append(G.mul(partial[-1], g))
        return phi(*partial)

    return GroupCochain(G, phi.degree, c, name=f"nhom({phi.name})", **flags)


def permutation_sign(perm) -> int:
    sign, seen = 1, [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def antisymmetrize(phi: HomogeneousCochain) -> HomogeneousCochain:
    k = phi.degree
    if k > MAX_ANTISYM_DEGREE:
        raise PreconditionError(f"antisymmetrization refused above degree {MAX_ANTISYM_DEGREE} (got {k})")
    perms = [(p, permutation_sign(p)) for p in itertools.permutations(range(k + 1))]
    norm = math.factorial(k + 1)

    def alt(*gs):
        total = sum(s * phi(*(gs[p[i]] for i in range(k + 1))) for p, s in perms)
        # keep rationals rational
        return total / norm if not isinstance(total, (int, Fraction)) else Fraction(total) / norm

    return HomogeneousCochain(phi.group, k, alt, name=f"alt({phi.name})")


# --- built-in cocycles -------------------------------------------------------


def _det(vectors) -> float | int:
    M = [list(v) for v in vectors]
    n = len(M)
    if n == 0:
        return 1
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    # integer entries: Bareiss keeps the determinant exact
    if all(isinstance(x, (int, np.integer)) for row in M for x in row):
        M = [[int(x) for x in row] for row in M]
        sign, prev = 1, 1
        for i in range(n - 1):
            if M[i][i] == 0:
                swap = next((r for r in range(i + 1, n) if M[r][i] != 0), None)
                if swap is None:
                    return 0
                M[i], M[swap] = M[swap], M[i]
                sign = -sign
            for r in range(i + 1, n):
                for s in range(i + 1, n):
                    M[r][s] = (M[r][s] * M[i][i] - M[r][i] * M[i][s]) // prev
            prev = M[i][i]
        return sign * M[n - 1][n - 1]
    return float(np.linalg.det(np.array(M, dtype=float).T))


def builtin_cocycle(name: str, params: dict | None = None) -> GroupCochain:
    params = dict(params or {})
    if name == "trivial-degree-0":
        group = params.get("group") or free_abelian(params.get("rank", 1))
        return GroupCochain(group, 0, lambda: 1, normalized=True, antisymmetric_image=True,
                            growth=(0, 1.0), name=name)
    if name == "linear-on-Zk":
        weights = tuple(params.get("weights", (1,) * params.get("rank", 1)))
        G = free_abelian(len(weights))
        C = float(max(abs(w) for w in weights))
        return GroupCochain(G, 1, lambda g: sum(w * x for w, x in zip(weights, g)),
                            normalized=True, antisymmetric_image=True, growth=(1, C), name=name)
    if name == "area-on-Z2":
        G = free_abelian(2)
        # |det(g,h)| <= |g|_1 |h|_1, so one power of (1+|g_i|) per argument suffices
        return GroupCochain(G, 2, lambda g, h: g[0] * h[1] - g[1] * h[0],
                            normalized=True, antisymmetric_image=True, growth=(1, 1.0), name=name)
    if name == "volume-on-Z2p":
        rank = int(params.get("rank", 4))
        if rank % 2 or rank < 2:
            raise ConfigError("volume cocycle needs an even rank >= 2")
        G = free_abelian(rank)
        return GroupCochain(G, rank, lambda *gs: _det(gs), normalized=True,
                            antisymmetric_image=True, growth=(1, 1.0), name=name)
    raise ConfigError(f"unknown builtin cocycle {name!r}")


BUILTIN_COCYCLES = ("trivial-degree-0", "linear-on-Zk", "area-on-Z2", "volume-on-Z2p")


# --- sampled checks --------------------------------------------------------------


def _tuples(G, rng, k, n, radius):
    return [tuple(G.random_element(rng, radius) for _ in range(k)) for _ in range(n)]


def check_normalized(c: GroupCochain, rng, n: int = 1000, radius: int = 6) -> float:
    """Max |c| over sampled tuples containing the identity or multiplying to the identity."""
    G, k = c.group, c.degree
    if k == 0:
        return 0.0  # degree-0 constants are exempt (the empty product is always the identity)
    worst = 0.0
    for gs in _tuples(G, rng, k, n, radius):
        i = int(rng.integers(0, k))
        with_e = gs[:i] + (G.identity,) + gs[i + 1:]
        closing = gs[:-1] + (G.inv(G.prod(gs[:-1])),)
        worst = max(worst, abs(c(*with_e)), abs(c(*closing)))
    return worst


def check_cyclic_shift(c: GroupCochain, rng, n: int = 1000, radius: int = 6) -> float:
    """If g_1..g_{k+1} = 1 then c(g_2..g_{k+1}) = (-1)^k c(g_1..g_k)."""
    G, k = c.group, c.degree
    worst = 0.0
    for gs in _tuples(G, rng, k, n, radius):
        full = gs + (G.inv(G.prod(gs)),)
        worst = max(worst, abs(c(*full[1:]) - (-1) ** k * c(*full[:k])))
    return worst


def check_matrix_antisymmetry(c: GroupCochain, rng, n: int = 200, radius: int = 4) -> float:
    """With g_ij = x_i^-1 x_j, c(g_{i0 i1}, .., g_{i(k-1) ik}) is alternating in the indices."""
    G, k = c.group, c.degree
    worst = 0.0
    for _ in range(n):
        xs = [G.random_element(rng, radius) for _ in range(k + 1)]

        def val(order):
            return c(*(G.mul(G.inv(xs[order[j]]), xs[order[j + 1]]) for j in range(k)))

        base = val(list(range(k + 1)))
        perm = list(rng.permutation(k + 1))
        worst = max(worst, abs(val(perm) - permutation_sign(perm) * base))
    return worst


def check_growth(c: GroupCochain, rng, n: int = 1000, radius: int = 20) -> float:
    """Largest |c| / (C prod (1+|g_i|)^d) seen; <= 1 means the growth claim survived."""
    if c.growth is None:
        raise PreconditionError("cochain carries no growth metadata")
    d, C = c.growth
    G = c.group
    worst = 0.0
    for gs in _tuples(G, rng, c.degree, n, radius):
        bound = C * np.prod([(1 + G.word_length(g)) ** d for g in gs]) if gs else C
        worst = max(worst, abs(c(*gs)) / bound)
    return worst


def random_rational_cochain(G: GroupSpec, degree: int, seed: int, scale: int = 50) -> GroupCochain:
    """Arbitrary cochain with Fraction values, memoized so that evaluation is a function."""
    cache: dict = {}
    rng = np.random.default_rng(seed)

    def c(*gs):
        if gs not in cache:
            cache[gs] = Fraction(int(rng.integers(-scale, scale + 1)), int(rng.integers(1, 7)))
        return cache[gs]

    return GroupCochain(G, degree, c, name=f"random{degree}")


# --- Cech form on structured covers ------------------------------------------------


@dataclass(frozen=True)
class StructuredCover:
    """Partition of unity on a periodic lattice with per-patch lifts to the universal cover.

    ``chis[i]`` holds the partition function of patch i on sites; ``lifts[i]`` maps a site
    (inside the patch domain) to its chosen integer coordinates upstairs, or None outside.
    Transitions are g_ij = (lift_i - lift_j) / period, so lift_i = lift_j + period * g_ij.
    """

    shape: str
    size: int
    chis: tuple
    lifts: tuple
    group: GroupSpec = field(default=None)

    def transition(self, i, j, site):
        a, b = self.lifts[i](site), self.lifts[j](site)
        if a is None or b is None:
            raise PreconditionError(f"site {site} lies outside the domain of patches {i},{j}")
        return tuple((x - y) // self.size for x, y in zip(a, b))


@dataclass(frozen=True)
class DiscreteForm:
    degree: int
    values: np.ndarray

    def integral(self) -> complex:
        return complex(np.sum(self.values))


def _circle_patches(n: int, overlap: float | None):
    if n < 12:
        raise ConfigError("circle cover needs at least 12 sites")
    width = overlap if overlap is not None else max(2.0, (n / 2) / 4)
    if not (0 < width < n / 2 - 2):
        raise ConfigError(f"overlap width {width} is incompatible with {n} sites")
    centers = (n / 4, 3 * n / 4)
    x = np.arange(n)
    circ = np.minimum(np.abs(x - centers[0]), n - np.abs(x - centers[0]))
    chi0 = np.clip((n / 4 + width / 2 - circ) / width, 0.0, 1.0)
    chis = (chi0, 1.0 - chi0)
    reach = n / 4 + width / 2 + 1

    def make_lift(center):
        def lift(site):
            rep = site + n * round((center - site) / n)
            return (int(rep),) if abs(rep - center) <= reach else None
        return lift

    return chis, tuple(make_lift(c) for c in centers)


def circle_cover(n: int, overlap: float | None = None) -> StructuredCover:
    chis, lifts = _circle_patches(n, overlap)
    return StructuredCover("circle", n, chis, lifts, free_abelian(1))


def torus_cover(n: int, overlap: float | None = None) -> StructuredCover:
    (c0, c1), (l0, l1) = _circle_patches(n, overlap)
    chis1, lifts1 = (c0, c1), (l0, l1)
    chis, lifts = [], []
    for a, b in itertools.product(range(2), repeat=2):
        chis.append(np.outer(chis1[a], chis1[b]))

        def lift(site, a=a, b=b):
            la, lb = lifts1[a](site[0]), lifts1[b](site[1])
            return None if la is None or lb is None else la + lb

        lifts.append(lift)
    return StructuredCover("torus", n, tuple(chis), tuple(lifts), free_abelian(2))


def cech_form_omega_c(cover: StructuredCover, c: GroupCochain) -> DiscreteForm:
    """omega_c = sum chi_{i0} dchi_{i1} ... dchi_{ik} c(g_{i0 i1}, .., g_{i(k-1) ik}).

    The differential is the forward difference; on the torus the top form on the plaquette
    at p is chi(p) (D_x a D_y b - D_y a D_x b)(p).
    """
    k, n, P = c.degree, cover.size, len(cover.chis)
    if cover.shape not in ("circle", "torus"):
        raise ConfigError(f"unsupported cover shape {cover.shape!r}")
    dim = 1 if cover.shape == "circle" else 2
    if k == 0:
        return DiscreteForm(0, sum(chi * c() for chi in cover.chis))
    if k != dim:
        raise PreconditionError(f"only top-degree forms are built (degree {k} on a {cover.shape})")
    if dim == 1:
        vals = np.zeros(n, dtype=complex)
        diffs = [np.roll(chi, -1) - chi for chi in cover.chis]
        for x in range(n):
            for i0, i1 in itertools.product(range(P), repeat=2):
                w = cover.chis[i0][x] * diffs[i1][x]
                if w != 0:
                    vals[x] += w * c(cover.transition(i0, i1, x))
        return DiscreteForm(1, vals)
    vals = np.zeros((n, n), dtype=complex)
    dx = [np.roll(chi, -1, axis=0) - chi for chi in cover.chis]
    dy = [np.roll(chi, -1, axis=1) - chi for chi in cover.chis]
    for x, y in itertools.product(range(n), repeat=2):
        for i0, i1, i2 in itertools.product(range(P), repeat=3):
            w = cover.chis[i0][x, y] * (dx[i1][x, y] * dy[i2][x, y] - dy[i1][x, y] * dx[i2][x, y])
            if w != 0:
                site = (x, y)
                vals[x, y] += w * c(cover.transition(i0, i1, site), cover.transition(i1, i2, site))
    return DiscreteForm(2, vals)
