"""Degree-2 pairing of the lowest Hofstadter band against the plaquette Chern number.

    python scripts/flux_chern_table.py --sizes 6,8 --fluxes 1,2
"""
import argparse
from dataclasses import replace

import numpy as np

from higher_aps.index_pipeline import CHERN_SCENARIO, build_model, higher_index_absolute, oracle_chern_fhs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="6,8")
    ap.add_argument("--fluxes", default="1,2")
    ap.add_argument("--n-theta", type=int, default=16)
    args = ap.parse_args()
    print(f"{'n':>3} {'flux':>4} {'chern':>6} {'pairing':>26} {'pairing / chern':>26}")
    for n in (int(x) for x in args.sizes.split(",")):
        for flux in (int(x) for x in args.fluxes.split(",")):
            spec = replace(CHERN_SCENARIO.model, n=n, flux=flux, n_theta=args.n_theta)
            scn = replace(CHERN_SCENARIO, model=spec)
            torus = build_model(spec, np.random.default_rng(scn.seed))
            chern = oracle_chern_fhs(torus.band_frame, torus.n_theta)
            value = higher_index_absolute(scn, 1.0, torus).value
            print(f"{n:>3} {flux:>4} {chern:>6.2f} {value:>26.13f} {value / round(chern):>26.13f}")


if __name__ == "__main__":
    main()
