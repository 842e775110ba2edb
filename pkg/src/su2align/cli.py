"""Command-line entry point for the Monte-Carlo benchmark.

Exit codes: 0 on success, 2 on configuration errors, 3 when more than 1%
of trials hit solver-level errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import SOLVERS, ExperimentConfig, emit_results, run_experiment
from .errors import ConfigError

ERROR_RATE_LIMIT = 0.01


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bench",
        description="Seeded Monte-Carlo benchmark for the rotation solvers. "
        "The BENCH_THREADS environment variable overrides the worker count "
        "(default: hardware parallelism); results are byte-identical for "
        "any worker count.",
    )
    p.add_argument("--solver", required=True, choices=SOLVERS)
    p.add_argument("--n", required=True, type=int, help="observation pairs per trial")
    p.add_argument("--noise", required=True, type=float, help="per-component Gaussian sigma")
    p.add_argument("--trials", required=True, type=int)
    p.add_argument("--seed", required=True, type=int, help="64-bit unsigned stream seed")
    p.add_argument("--weights", default="random", choices=("uniform", "random"))
    p.add_argument("--emit", default="csv", choices=("csv", "json", "both"))
    p.add_argument("--out", default="bench_results", help="output base path (suffixes added)")
    p.add_argument("--timing", action="store_true", help="time each solver call (ns)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExperimentConfig(
        solver=args.solver,
        n=args.n,
        noise_sigma=args.noise,
        trials=args.trials,
        seed=args.seed,
        weight_mode=args.weights,
        emit=args.emit,
        out=args.out,
        timing=args.timing,
    )
    try:
        cfg.validate()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    summary, theta, runtimes = run_experiment(cfg)
    try:
        emit_results(summary, theta, runtimes, cfg.emit, cfg.out)
    except OSError as e:
        print(str(e), file=sys.stderr)
        return 2
    print(json.dumps(summary.to_dict(), indent=2))
    if summary.errors > ERROR_RATE_LIMIT * summary.trials:
        print(
            f"error rate {summary.errors}/{summary.trials} exceeds "
            f"{ERROR_RATE_LIMIT:.0%}",
            file=sys.stderr,
        )
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
