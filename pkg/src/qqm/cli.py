"""Command-line experiment runner: ``qqm run`` and ``qqm compare``.

Heavy imports happen after argument parsing so thread caps set by
``--threads`` and ``--strict-deterministic`` reach the numeric libraries.
"""
from __future__ import annotations

import argparse
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


def _set_threads(k):
    for var in THREAD_VARS:
        os.environ[var] = str(k)


def _parser():
    p = argparse.ArgumentParser(prog="qqm", description="Quantum quantile mechanics experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: $QQM_OUT/<experiment>-<hash>)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--threads", type=int, help="cap worker threads")
    r.add_argument("--strict-deterministic", action="store_true",
                   help="single-threaded numerics for byte-identical outputs")
    c = sub.add_parser("compare", help="compare histograms of two runs")
    c.add_argument("manifest_a")
    c.add_argument("manifest_b")
    c.add_argument("--out", help="report directory (default: next to manifest A)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            print("qqm: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        _set_threads(args.threads)
    if getattr(args, "strict_deterministic", False):
        _set_threads(1)
    from . import runner
    if args.command == "run":
        return runner.run(args.config, out=args.out, seed=args.seed,
                          strict=args.strict_deterministic, threads=args.threads)
    return runner.compare(args.manifest_a, args.manifest_b, out=args.out)


if __name__ == "__main__":
    sys.exit(main())
