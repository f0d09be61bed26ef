"""Command-line entry points: preprocess, check, opt.

Exit codes: 0 success/verified, 1 rejected or unequal, 2 usage or I/O
error, 3 resource limit.  Diagnostics go to stderr; verdicts and summaries
to stdout.
"""

import argparse
import sys

from . import preprocess
from .checker import check_wcnf_proof
from .wcnf import opt_cost_bruteforce, parse_wcnf, write_wcnf

VERIFIED_LINE = "s VERIFIED OUTPUT EQUIOPTIMAL"


def _read(path):
    with open(path, "r") as fh:
        return fh.read()


def _parse_instance(path):
    return parse_wcnf(_read(path))


def cmd_preprocess(args):
    try:
        inst = _parse_instance(args.input)
    except (OSError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    try:
        if args.techniques is None:
            cfg = preprocess.Config(rounds=args.rounds, seed=args.seed)
        else:
            cfg = preprocess.Config.from_flag(args.techniques,
                                              rounds=args.rounds,
                                              seed=args.seed)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    try:
        with open(args.proof, "w") as proof_sink:
            out, _, p = preprocess.run(inst, cfg, sink=proof_sink)
        with open(args.output, "w") as fh:
            fh.write(write_wcnf(out))
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    if p.cap_hit:
        print("warning: iteration cap reached before fixpoint",
              file=sys.stderr)
    print("clauses: %d -> %d" % (len(inst.hard) + len(inst.soft),
                                 len(out.hard) + len(out.soft)))
    print("vars: %d -> %d" % (inst.max_var_index(), out.max_var_index()))
    print("proof lines: %d" % p.writer.lines_written)
    return 0


def cmd_check(args):
    try:
        inst = _parse_instance(args.input)
        proof_lines = _read(args.proof).splitlines()
        out = _parse_instance(args.output)
    except (OSError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    verdict = check_wcnf_proof(inst, proof_lines, out)
    if verdict.accepted and verdict.level == "EQUIOPTIMAL":
        print(VERIFIED_LINE)
        return 0
    if verdict.accepted:
        print("s REJECTED 0: proof concludes %s, not EQUIOPTIMAL"
              % verdict.level)
    else:
        print("s REJECTED %d: %s" % (verdict.lineno, verdict.error))
    return 1


def cmd_opt(args):
    try:
        inst = _parse_instance(args.input)
    except (OSError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    try:
        best = opt_cost_bruteforce(inst, var_limit=args.bound)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    if best is None:
        print("s INFEASIBLE")
    else:
        print("o %d" % best)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="certprep",
        description="Certified MaxSAT preprocessing: simplify WCNF instances "
                    "with machine-checkable equioptimality proofs.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("preprocess",
                       help="simplify an instance and emit a proof")
    p.add_argument("input", help="input WCNF path")
    p.add_argument("-o", "--output", required=True, help="output WCNF path")
    p.add_argument("-p", "--proof", required=True, help="proof output path")
    p.add_argument("--techniques", default=None,
                   help="comma-separated technique names (default: standard "
                        "set; empty string: none)")
    p.add_argument("--rounds", type=int, default=5,
                   help="fixpoint iteration cap per stage")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("check", help="verify a proof end to end")
    p.add_argument("input", help="input WCNF path")
    p.add_argument("proof", help="proof path")
    p.add_argument("output", help="claimed output WCNF path")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("opt", help="brute-force optimum (testing oracle)")
    p.add_argument("input", help="input WCNF path")
    p.add_argument("--bound", type=int, default=22,
                   help="refuse instances with more variables than this")
    p.set_defaults(func=cmd_opt)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
