"""Absolute and relative pairings of a scenario over a range of heat scales u.

    python scripts/u_sweep.py src/higher_aps/data/scenarios/flux_torus_area.yaml --grid 0.25,0.5,1,2,4
"""
import argparse

import numpy as np

from higher_aps.cli import load_config
from higher_aps.index_pipeline import build_model, higher_index_absolute, higher_index_relative


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--grid", default="0.5,1,2,4")
    ap.add_argument("--relative", action="store_true", help="also compute the relative pairing (slow on slabs)")
    args = ap.parse_args()
    scn = load_config(args.config).scenario
    model = build_model(scn.model, np.random.default_rng(scn.seed))
    for u in (float(x) for x in args.grid.split(",")):
        line = f"u={u:<6g} absolute={higher_index_absolute(scn, u, model).value:.12g}"
        if args.relative:
            line += f"  relative={higher_index_relative(scn, u, model).value:.12g}"
        print(line)


if __name__ == "__main__":
    main()
