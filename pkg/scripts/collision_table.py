"""Empirical vs analytic bin-collision probability on a grid of bandwidths and distances."""

import argparse
import math

from poslsh.alibi_kernel import alibi_entry
from poslsh.rbf_lsh import estimate_collision_probability


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'sigma':>6} {'dist':>5} {'analytic':>9} {'empirical':>9} {'z':>6}")
    for sigma in (2.0, 8.0, 32.0, 128.0):
        for dist in (0, 1, int(sigma // 2), int(sigma), int(4 * sigma)):
            p = alibi_entry(0, dist, sigma)
            est = estimate_collision_probability(0, dist, sigma, args.trials, args.seed + dist)
            se = math.sqrt(p * (1 - p) / args.trials)
            z = (est - p) / se if se else 0.0
            print(f"{sigma:>6g} {dist:>5} {p:>9.5f} {est:>9.5f} {z:>6.2f}")


if __name__ == "__main__":
    main()
