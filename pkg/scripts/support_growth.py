"""Ratio |tau^r_c(a_0..a_k)| / prod |||a_i|||_m for operators spread over growing group balls.

    python scripts/support_growth.py --cocycle linear-on-Zk --radii 1,2,4,8
"""
import argparse

import numpy as np

from higher_aps.group_cohomology import BUILTIN_COCYCLES, builtin_cocycle
from higher_aps.higher_cocycles import support_growth_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cocycle", choices=BUILTIN_COCYCLES[:3], default="linear-on-Zk")
    ap.add_argument("--radii", default="1,2,4,8")
    ap.add_argument("--weight", type=float, default=1.0, help="weight exponent m of the norm")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    radii = [int(x) for x in args.radii.split(",")]
    ratios = support_growth_sweep(builtin_cocycle(args.cocycle), radii, np.random.default_rng(args.seed), args.weight)
    for r, q in zip(radii, ratios):
        print(f"radius {r:>3}: ratio {q:.4e}")


if __name__ == "__main__":
    main()
