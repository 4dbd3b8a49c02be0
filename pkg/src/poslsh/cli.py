"""Command-line entry point.

Exit codes: 0 success, 1 a scientific check failed, 2 usage or I/O error.
Reports go to stdout as ``key=value`` lines.
"""

import argparse
import math
import sys

from poslsh.alibi_kernel import alibi_entry
from poslsh.diagnostics import audit_error_bound
from poslsh.errors import ParameterError
from poslsh.harness import (
    ExperimentConfig,
    MatrixFormatError,
    gen_synthetic_instance,
    parse_bool,
    parse_config_text,
    parse_int_list,
    read_qkv,
    run_blocksize_tail,
    run_convergence_sweep,
    write_qkv,
)
from poslsh.rbf_lsh import BlockPartition, estimate_collision_probability, sample_partitions

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return parse_int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pairs(text):
    out = []
    for part in text.split(","):
        try:
            i, j = part.split(":")
            out.append((int(i), int(j)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected i:j pairs, got {part!r}") from None
    return out


def _bool(text):
    try:
        return parse_bool(text)
    except ParameterError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _fmt(x):
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit(**kv):
    print(" ".join(f"{k}={_fmt(v)}" for k, v in kv.items()))


def cmd_collision_check(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    ok = True
    for i, j in args.pairs:
        p = alibi_entry(i, j, args.sigma)
        est = estimate_collision_probability(i, j, args.sigma, args.trials, args.seed)
        band = 3.0 * math.sqrt(p * (1.0 - p) / args.trials)
        passed = abs(est - p) <= band
        ok &= passed
        _emit(i=i, j=j, sigma=args.sigma, trials=args.trials, analytic=p, empirical=est,
              band=band, verdict="pass" if passed else "fail")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sample_masks(args):
    for k, p in enumerate(sample_partitions(args.sigma, args.n, args.s, args.seed)):
        _emit(sample=k, b_max=p.max_block_size(), boundaries=",".join(map(str, p.boundaries)))
    return EXIT_OK


def _config_from_args(args):
    values = {}
    if args.config:
        try:
            with open(args.config) as f:
                values = parse_config_text(f.read())
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
    flag_map = {
        "n": args.n, "d": args.d, "d_prime": args.d_prime, "sigma_list": args.sigma_list,
        "s_list": args.s_list, "seeds": args.seeds, "causal": args.causal, "delta": args.delta,
        "output_path": getattr(args, "output", None), "threads": args.threads,
    }
    values.update({k: v for k, v in flag_map.items() if v is not None})
    if args.qkv_dir is not None:
        values["qkv_source"] = f"file:{args.qkv_dir}"
    elif args.scale is not None:
        values["qkv_source"] = f"gaussian:{args.scale}"
    if getattr(args, "no_wall_clock", False):
        values["record_wall_clock"] = False
    if getattr(args, "inject_fault", False):
        values["inject_fault"] = True
    return ExperimentConfig(**values).validate()


def cmd_convergence(args):
    config = _config_from_args(args)
    if not config.output_path:
        raise UsageError("an output path is required (--output or output_path in --config)")
    try:
        records = run_convergence_sweep(config)
    except OSError as e:
        raise UsageError(f"cannot write output: {e}") from None
    failures = sum(1 for r in records if not r.bound_holds)
    _emit(records=len(records), bound_violations=failures, output=config.output_path)
    return EXIT_FAIL if failures else EXIT_OK


def cmd_blocksize_tail(args):
    config = _config_from_args(args)
    ok = True
    for r in run_blocksize_tail(config):
        ok &= r.fraction <= args.max_fraction
        _emit(sigma=r.sigma, s=r.s, runs=r.runs, exceedances=r.exceedances,
              fraction=r.fraction, bound=r.bound, max_b_max=r.max_b_max)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_attention_compare(args):
    if args.qkv_dir:
        inst = read_qkv(args.qkv_dir, sigma=args.sigma, causal=args.causal)
    else:
        inst = gen_synthetic_instance(args.n, args.d, args.d_prime, args.seed, scale=args.scale,
                                      sigma=args.sigma, causal=args.causal)
    if args.force_single_block:
        parts = [BlockPartition(inst.n, (0, inst.n))] * args.s
    else:
        parts = sample_partitions(args.sigma, inst.n, args.s, args.seed)
    audit = audit_error_bound(inst, parts, fault=args.inject_fault)
    _emit(n=inst.n, sigma=args.sigma, s=args.s, causal=args.causal,
          beta_star=audit.beta_star, p_two_inf=audit.p_two_inf, res_max=audit.res_max,
          res_spec=audit.res_spec, d_tilde_min=audit.d_tilde_min, output_err=audit.output_err,
          bound_value=audit.bound_value, b_max=audit.b_max,
          block_flop_units=audit.work.block_flop_units, degenerate=audit.degenerate,
          bound_holds=audit.bound_holds)
    return EXIT_OK if audit.bound_holds else EXIT_FAIL


def cmd_gen_qkv(args):
    inst = gen_synthetic_instance(args.n, args.d, args.d_prime, args.seed, scale=args.scale)
    write_qkv(args.out_dir, inst)
    _emit(out_dir=args.out_dir, n=args.n, d=args.d, d_prime=args.d_prime, seed=args.seed)
    return EXIT_OK


def _add_sweep_flags(p, output=True):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--d-prime", type=int)
    p.add_argument("--sigma-list", type=_float_list)
    p.add_argument("--s-list", type=_int_list)
    p.add_argument("--seeds", type=_int_list, help="e.g. 0,1,2 or 0-19")
    p.add_argument("--causal", type=_bool, help="true/false")
    p.add_argument("--delta", type=float)
    p.add_argument("--scale", type=float, help="std of synthetic Gaussian Q, K, V")
    p.add_argument("--qkv-dir", help="directory with q.txt, k.txt, v.txt")
    p.add_argument("--threads", type=int)
    if output:
        p.add_argument("--output", "-o")


def build_parser():
    parser = argparse.ArgumentParser(prog="poslsh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collision-check", help="empirical vs analytic collision probability")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=_pairs, default=[(0, 1)], help="e.g. 0:8,5:5")
    p.set_defaults(func=cmd_collision_check)

    p = sub.add_parser("sample-masks", help="print sampled block boundaries")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample_masks)

    p = sub.add_parser("convergence", help="error sweep over seeds, sigma and s; writes CSV")
    _add_sweep_flags(p)
    p.add_argument("--no-wall-clock", action="store_true", help="write wall_ms as 0 for byte-stable output")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("blocksize-tail", help="how often the largest block exceeds its cap")
    _add_sweep_flags(p, output=False)
    p.add_argument("--max-fraction", type=float, default=0.05)
    p.set_defaults(func=cmd_blocksize_tail)

    p = sub.add_parser("attention-compare", help="audit one approximate attention run")
    p.add_argument("--qkv-dir")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--d-prime", type=int, default=8)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=8.0)
    p.add_argument("--s", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--causal", type=_bool, default=False)
    p.add_argument("--force-single-block", action="store_true")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_attention_compare)

    p = sub.add_parser("gen-qkv", help="write a synthetic instance as matrix text files")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--d-prime", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_qkv)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MatrixFormatError as e:
        print(f"error: malformed matrix file {e}", file=sys.stderr)
    except (UsageError, ParameterError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
