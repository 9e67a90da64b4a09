"""Property suites behind ``higher-aps verify``: each returns rows of (invariant, residual, tolerance).

The suites are deterministic for a given seed, so two runs print and write identical tables.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .b_trace import RegularizationData, b_trace, commutator_defect
from .cyclic_homology import (RelativeCochain, UnitalElement, connes_B, hochschild_b,
                              random_normalized_cochain, random_unital, relative_differential)
from .group_cohomology import (builtin_cocycle, check_cyclic_shift, check_growth, check_matrix_antisymmetry,
                               check_normalized, from_homogeneous, nhom_delta, random_rational_cochain,
                               to_homogeneous)
from .group_core import cyclic_group, free_abelian, free_group
from .higher_cocycles import RandomOperatorSpec, random_a_operator, random_g_operator, relative_cocycle, \
    sample_regularization
from .lattice_models import BKernel, DiracModel, SlabGeometry, circle_defect_model
from .projectors import cm_idempotent, cm_idempotent_adjoint, connes_skandalis, homotopy, parametrix_V

SUITES = ("algebra", "cocycles", "btrace", "projectors")


@dataclass
class Row:
    suite: str
    invariant: str
    residual: float
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return bool(self.residual < self.tolerance)

    def as_dict(self) -> dict:
        return {"suite": self.suite, "invariant": self.invariant, "residual": float(self.residual),
                "tolerance": self.tolerance, "samples": self.samples, "passed": self.passed}


# --- algebra --------------------------------------------------------------------------------------


def _hom_conjugation(dim: int, rng: np.random.Generator):
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    S = np.eye(dim) + 0.3 * X / np.linalg.norm(X, 2)
    Si = np.linalg.inv(S)
    return lambda a: S @ a @ Si


def suite_algebra(seed: int = 0, n_tuples: int = 1000, max_dim: int = 8) -> list[Row]:
    """b^2, B^2, bB + Bb and the relative d^2 on random normalized cochains over M_n(C), n <= 8."""
    rng = np.random.default_rng(seed)
    worst = {"b^2": 0.0, "B^2": 0.0, "bB+Bb": 0.0, "relative d^2": 0.0}

    def cochain_and_args(k, n_args):
        dim = int(rng.integers(2, max_dim + 1))
        return dim, random_normalized_cochain(k, dim, rng), [random_unital(dim, rng) for _ in range(n_args)]

    # every invariant sees n_tuples tuples, cycling through the degrees where it is defined
    for i in range(n_tuples):
        k = i % 4
        _, phi, args = cochain_and_args(k, k + 3)
        worst["b^2"] = max(worst["b^2"], abs(hochschild_b(hochschild_b(phi))(*args)))
        kB = 2 + i % 2
        _, phi, args = cochain_and_args(kB, kB - 1)
        worst["B^2"] = max(worst["B^2"], abs(connes_B(connes_B(phi))(*args)))
        kM = 1 + i % 3
        _, phi, args = cochain_and_args(kM, kM + 1)
        mix = hochschild_b(connes_B(phi)) + connes_B(hochschild_b(phi))
        worst["bB+Bb"] = max(worst["bB+Bb"], abs(mix(*args)))
        # relative complex over (M_n, M_n) with a conjugation homomorphism
        dim = int(rng.integers(2, max_dim + 1))
        tau = random_normalized_cochain(k, dim, rng)
        sigma = random_normalized_cochain(k + 1, dim, rng)
        r = RelativeCochain.homogeneous(tau, sigma, _hom_conjugation(dim, rng))
        dd = relative_differential(relative_differential(r))
        for part in (dd.tau, dd.sigma):
            for deg, c in part.items():
                worst["relative d^2"] = max(worst["relative d^2"],
                                            abs(c(*[random_unital(dim, rng) for _ in range(deg + 1)])))
    return [Row("algebra", name, float(v), 1e-12, n_tuples) for name, v in worst.items()]


# --- group cocycles ----------------------------------------------------------------------------------


def _all_builtins():
    return [builtin_cocycle("trivial-degree-0"), builtin_cocycle("linear-on-Zk", {"weights": (2, -1)}),
            builtin_cocycle("area-on-Z2"), builtin_cocycle("volume-on-Z2p", {"rank": 4})]


def suite_group_cohomology(seed: int = 0, n_samples: int = 1000) -> list[Row]:
    rng = np.random.default_rng(seed)
    groups = [free_abelian(2), free_group(2), cyclic_group(5)]
    dd_worst, trip_worst, count = 0, 0, 0
    for gi, G in enumerate(groups):
        for k in range(4):
            c = random_rational_cochain(G, k, seed=seed + 10 * gi + k)
            ddc = nhom_delta(nhom_delta(c))
            phi = to_homogeneous(c)
            back = from_homogeneous(phi)
            phi_back = to_homogeneous(back)
            for _ in range(-(-n_samples // 12)):
                gs = tuple(G.random_element(rng, 3) for _ in range(k + 2))
                dd_worst = max(dd_worst, abs(ddc(*gs)))
                trip_worst = max(trip_worst, abs(back(*gs[:k]) - c(*gs[:k])), abs(phi_back(*gs[:k + 1]) - phi(*gs[:k + 1])))
                count += 1
    rows = [Row("cocycles", "delta^2 (exact rationals)", float(dd_worst), 1e-300, count),
            Row("cocycles", "homogeneous round trips (exact)", float(trip_worst), 1e-300, count)]
    for c in _all_builtins():
        rows.append(Row("cocycles", f"{c.name}: normalized", check_normalized(c, rng, n_samples), 1e-300, n_samples))
        rows.append(Row("cocycles", f"{c.name}: cyclic shift", check_cyclic_shift(c, rng, n_samples), 1e-300, n_samples))
        rows.append(Row("cocycles", f"{c.name}: matrix antisymmetry",
                        check_matrix_antisymmetry(c, rng, n_samples), 1e-300, n_samples))
        rows.append(Row("cocycles", f"{c.name}: polynomial growth (ratio - 1)",
                        max(check_growth(c, rng, n_samples) - 1.0, 0.0), 1e-300, n_samples))
    return rows


RELATIVE_COCYCLES = (("trivial-degree-0", {}), ("linear-on-Zk", {}), ("area-on-Z2", {}))


def suite_relative_cocycles(seed: int = 0, n_tuples: int = 100, n_nodes: int = 32) -> list[Row]:
    """b tau^r = I* sigma, B tau^r = 0, b sigma = 0, B sigma = 0 on random A- and G-class tuples."""
    rng = np.random.default_rng(seed)
    spec = RandomOperatorSpec(n_blocks=4)
    reg = sample_regularization(spec)
    rows = []
    for name, params in RELATIVE_COCYCLES:
        c = builtin_cocycle(name, params)
        G, k = c.group, c.degree
        r = relative_cocycle(c, reg, n_nodes, rng)
        tau, sigma = r.tau[k], r.sigma[k + 1]
        b_tau, I_sigma = hochschild_b(tau), sigma.pullback(r.hom)
        B_tau = connes_B(tau) if k >= 1 else None
        b_sigma, B_sigma = hochschild_b(sigma), connes_B(sigma)
        worst = {"b tau^r - I* sigma": 0.0, "B tau^r": 0.0, "b sigma": 0.0, "B sigma": 0.0}
        scale = 0.0

        def a_elem():
            # degree 0 pairs only bodies: the adjoined unit has no b-trace there
            return UnitalElement(random_a_operator(G, rng, spec), complex(rng.normal()) if k else 0.0)

        def g_elem():
            return UnitalElement(random_g_operator(G, rng, n_nodes, spec), complex(rng.normal()))

        for _ in range(n_tuples):
            a = [a_elem() for _ in range(k + 2)]
            lhs, rhs = b_tau(*a), I_sigma(*a)
            scale = max(scale, abs(lhs))
            worst["b tau^r - I* sigma"] = max(worst["b tau^r - I* sigma"], abs(lhs - rhs))
            if B_tau is not None:
                worst["B tau^r"] = max(worst["B tau^r"], abs(B_tau(*a[:k])))
            g = [g_elem() for _ in range(k + 3)]
            worst["b sigma"] = max(worst["b sigma"], abs(b_sigma(*g)))
            worst["B sigma"] = max(worst["B sigma"], abs(B_sigma(*g[:k + 1])))
        for inv, v in worst.items():
            rows.append(Row("cocycles", f"{name}: {inv}", float(v), 1e-8, n_tuples))
        rows.append(Row("cocycles", f"{name}: 1 / max |b tau^r| (guards against vacuous agreement)", 1.0 / scale, 1e3, n_tuples))
    return rows


def suite_cocycles(seed: int = 0) -> list[Row]:
    return suite_group_cohomology(seed) + suite_relative_cocycles(seed)


# --- b-trace -------------------------------------------------------------------------------------


BTRACE_GEOMETRY = SlabGeometry(40, 2, 2)


def random_residual_operator(geom: SlabGeometry, rng: np.random.Generator, rate: float = 1.5) -> np.ndarray:
    """Random slab matrix decaying like exp(-rate (|t| + |t'|)) into the cylinder."""
    depth = np.maximum(-geom.site_of_index(), 0)
    X = rng.normal(size=(geom.dim,) * 2) + 1j * rng.normal(size=(geom.dim,) * 2)
    w = np.exp(-rate * depth)
    return X * np.outer(w, w) / np.sqrt(geom.dim)


def random_b_operator(geom: SlabGeometry, rng: np.random.Generator, support: int = 1) -> BKernel:
    d = geom.fiber
    kern = {n: (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / (2 * d)
            for n in range(-support, support + 1)}
    return BKernel.from_kernel(kern, geom, random_residual_operator(geom, rng))


def suite_btrace(seed: int = 0, n_pairs: int = 100, window: int = 30) -> list[Row]:
    rng = np.random.default_rng(seed)
    geom = BTRACE_GEOMETRY
    regs = [RegularizationData(geom, window, a) for a in (0, 2, 5, 11)]
    tr_worst, reg_worst, def_worst = 0.0, 0.0, 0.0
    n_res = 50
    for _ in range(n_res):
        R = random_residual_operator(geom, rng)
        P = BKernel.residual_only(R, geom)
        tr_worst = max(tr_worst, abs(b_trace(P, regs[1]) - np.trace(R)))
    for _ in range(n_res):
        A = random_b_operator(geom, rng)
        vals = [b_trace(A, reg) for reg in regs]
        reg_worst = max(reg_worst, max(abs(v - vals[0]) for v in vals))
    for _ in range(n_pairs):
        A, B = random_b_operator(geom, rng), random_b_operator(geom, rng)
        lhs, rhs = commutator_defect(A, B, regs[1])
        def_worst = max(def_worst, abs(lhs - rhs))
    return [Row("btrace", "bTr = Tr on residual operators", tr_worst, 1e-12, n_res),
            Row("btrace", "regulator independence", reg_worst, 1e-10, n_res),
            Row("btrace", "commutator defect identity", def_worst, 1e-8, n_pairs)]


# --- projectors --------------------------------------------------------------------------------


def _projector_models(rng: np.random.Generator) -> list[DiracModel]:
    """32 x 32 graded operators (D^+ of size 16 x 16, and rectangular index +-1 variants)."""
    return [circle_defect_model(8, 2, 0, rng), circle_defect_model(8, 2, 0, rng),
            circle_defect_model(7, 2, 2, rng), circle_defect_model(7, 2, -2, rng)]


def suite_projectors(seed: int = 0, us=(0.5, 1.0, 2.0)) -> list[Row]:
    rng = np.random.default_rng(seed)
    idem, ends, cs, n = 0.0, 0.0, 0.0, 0
    for model in _projector_models(rng):
        for u in us:
            V = cm_idempotent(model, u)
            Vs = cm_idempotent_adjoint(model, u)
            idem = max(idem, V.idempotency_residual(), Vs.idempotency_residual())
            ends = max(ends, float(np.max(np.abs(homotopy(model, u, 0.5).matrix - V.matrix))),
                       float(np.max(np.abs(homotopy(model, u, -0.5).matrix - Vs.matrix))))
            P = connes_skandalis(parametrix_V(model, u), model, u)
            cs = max(cs, float(np.max(np.abs(P.matrix - V.matrix))))
            n += 1
    return [Row("projectors", "V^2 - V", idem, 1e-10, n),
            Row("projectors", "homotopy endpoints P(1/2) = V, P(-1/2) = V*", ends, 1e-12, n),
            Row("projectors", "Connes-Skandalis projector of Q_V equals V", cs, 1e-12, n)]


def run_suite(name: str, seed: int = 0) -> list[Row]:
    if name == "algebra":
        return suite_algebra(seed)
    if name == "cocycles":
        return suite_cocycles(seed)
    if name == "btrace":
        return suite_btrace(seed)
    if name == "projectors":
        return suite_projectors(seed)
    if name == "all":
        return [row for s in SUITES for row in run_suite(s, seed)]
    raise ValueError(f"unknown suite {name!r}")


def format_table(rows: list[Row]) -> str:
    width = max((len(r.invariant) for r in rows), default=10)
    lines = [f"{'suite':<11} {'invariant':<{width}} {'residual':>10} {'tolerance':>10}  status"]
    for r in rows:
        lines.append(f"{r.suite:<11} {r.invariant:<{width}} {r.residual:10.3e} {r.tolerance:10.1e}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
