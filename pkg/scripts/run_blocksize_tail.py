"""How often the largest block of s mask samples exceeds its high-probability cap.

    python3 scripts/run_blocksize_tail.py --sigmas 2,8,32 --s-list 10,100,1000 --runs 100
"""

import argparse

from poslsh.harness import ExperimentConfig, parse_int_list, run_blocksize_tail


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--sigmas", type=lambda t: [float(x) for x in t.split(",")], default=[2.0, 8.0, 32.0])
    ap.add_argument("--s-list", type=parse_int_list, default=[10, 100, 1000])
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--delta", type=float, default=0.01)
    args = ap.parse_args()

    cfg = ExperimentConfig(n=args.n, sigma_list=args.sigmas, s_list=args.s_list,
                           seeds=list(range(args.runs)), delta=args.delta)
    print(f"{'sigma':>7} {'s':>6} {'bound':>9} {'max b_max':>9} {'exceed':>7}")
    for r in run_blocksize_tail(cfg):
        print(f"{r.sigma:>7g} {r.s:>6} {r.bound:>9.2f} {r.max_b_max:>9} {r.fraction:>7.3f}")


if __name__ == "__main__":
    main()
