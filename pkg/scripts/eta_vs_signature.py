"""Eta invariant of random gapped boundaries against their signature.

    python scripts/eta_vs_signature.py --boundaries 6 --boundary-dim 8 --out eta_vs_signature.csv
"""
import argparse
import csv
from dataclasses import replace

import numpy as np

from higher_aps.index_pipeline import ModelSpec, Scenario, build_model, eta_invariant, oracle_eta_spectral


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--boundaries", type=int, default=6)
    ap.add_argument("--boundary-dim", type=int, default=8)
    ap.add_argument("--depth", type=int, default=48)
    ap.add_argument("--n-nodes", type=int, default=48)
    ap.add_argument("--out", default="eta_vs_signature.csv")
    args = ap.parse_args()
    base = Scenario("eta_vs_signature", ModelSpec(kind="aps_slab", boundary_dim=args.boundary_dim, depth=args.depth,
                                                  interior=2), n_nodes=args.n_nodes)
    rows = []
    for seed in range(args.boundaries):
        scn = replace(base, seed=seed)
        model = build_model(scn.model, np.random.default_rng(seed))
        eta = eta_invariant(scn, model)
        sig = oracle_eta_spectral(model.boundary)
        rows.append((seed, sig, eta.value.real, eta.error, eta.value.real / sig if sig else float("nan")))
        print(f"seed {seed}: signature {sig:+.0f}  eta {eta.value.real:+.12f} +- {eta.error:.1e}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "signature", "eta", "eta_error", "eta_over_signature"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
