"""Rademacher maximal function of the sharpness example against depth.

Prints the largest chain value, the certified upper value and the lower
envelope log(1/s)^(1/r - 1/2) at the first nonzero cell.  The envelope only
overtakes the bounded martingale value once it passes 1, which needs far
more dyadic scales than a dense grid can hold.
"""
import argparse

import numpy as np

from sparsedom.dyadic import build_anisotropic_system
from sparsedom.operators import RademacherParams, rademacher_maximal, sharpness_example
from sparsedom.space import make_interval_space
from sparsedom.weights import weighted_lp_norm


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--depths", type=int, nargs="+", default=[4, 6, 8, 10, 12])
    ap.add_argument("--r", type=float, default=1.5)
    args = ap.parse_args()
    r = args.r
    print("depth chain_max khintchine_max envelope_max L2 L16")
    for depth in args.depths:
        space = make_interval_space(depth)
        system = build_anisotropic_system(space)
        F = sharpness_example(space)
        ch = rademacher_maximal(F, system, RademacherParams(r=r, mode="chain"))
        kh = rademacher_maximal(F, system, RademacherParams(r=r, mode="khintchine"))
        env = np.log(1 / space.points[1:, 0]) ** (1 / r - 0.5)
        l2 = weighted_lp_norm(ch, 2, space=space)
        l16 = weighted_lp_norm(ch, 16, space=space)
        print(f"{depth} {ch.max():.4f} {kh.max():.4f} {env.max():.4f} {l2:.4f} {l16:.4f}")


if __name__ == "__main__":
    main()
