"""Command-line entry points.

safebo run --config cfg.json     run a campaign from a JSON config
safebo bench list                list registered benchmarks
safebo theory capacity ...       CSV of (N, gamma_N, beta_N, condition, log-crossing)
safebo theory expansion ...      expansion fixed point as a JSON grid snapshot

Exit codes: 0 full success, 1 configuration error, 2 partial per-seed failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .benchmarks import REGISTRY, make_problem
from .gp import Channel, KernelSpec
from .harness import RunConfig, resolve_output_dir, run_campaign, write_outputs
from .safety import BetaSchedule, ConfigError
from .theory import (
    CapacitySequence,
    capacity_constant,
    condition_values,
    eta,
    expansion_fixed_point,
    greedy_capacity,
)


def _cmd_run(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
        config = RunConfig.from_dict(raw)
    except (OSError, json.JSONDecodeError, ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    result = run_campaign(config)
    out = write_outputs(result)
    print(f"wrote {len(result.records)} trace(s) to {out}")
    for seed, err in sorted(result.failures.items()):
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    return 0 if result.ok else 2


def _cmd_bench_list(_args) -> int:
    for name in sorted(REGISTRY):
        problem = make_problem(name, seed=0)
        print(f"{name:12s} d={problem.dim}  f*={problem.fstar:.4f}  beta={problem.default_beta}")
    return 0


def _cmd_theory_capacity(args) -> int:
    kern = KernelSpec(lengthscale=args.lengthscale, outputscale=args.outputscale)
    grid = np.linspace(args.lo, args.hi, args.grid_size).reshape(-1, 1)
    gamma = greedy_capacity(kern, grid, args.n_max, args.noise_var)
    beta = BetaSchedule.constant(args.beta)
    g = lambda x: eta(x, args.mean_bound, args.noise_var)
    C = capacity_constant("exploration", args.noise_var)
    rows = condition_values(args.eps, beta, gamma, g, C, args.n_max)
    lines = ["N,gamma,beta,condition,log_crossing"]
    for N, g_n, b_n, cond, crossing in rows:
        lines.append(f"{int(N)},{g_n!r},{b_n!r},{cond!r},{crossing!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def _cmd_theory_expansion(args) -> int:
    try:
        problem = make_problem(args.benchmark, seed=args.seed)
    except KeyError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if problem.dim != 1:
        print("expansion snapshots support 1-D benchmarks only", file=sys.stderr)
        return 1
    grid = np.linspace(problem.box[0, 0], problem.box[0, 1], args.grid_size).reshape(-1, 1)
    nv = problem.noise_constraint.at_point(problem.x0)
    state = expansion_fixed_point(
        problem.constraint,
        problem.kernels.constraint,
        nv,
        grid,
        problem.x0,
        eps=args.eps,
        beta=args.beta,
    )
    payload = state.to_json_dict()
    payload["benchmark"] = args.benchmark
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safebo", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a campaign from a JSON config")
    run_p.add_argument("--config", required=True)
    run_p.set_defaults(func=_cmd_run)

    bench_p = sub.add_parser("bench", help="benchmark registry")
    bench_sub = bench_p.add_subparsers(dest="bench_command", required=True)
    bench_list = bench_sub.add_parser("list", help="list registered benchmarks")
    bench_list.set_defaults(func=_cmd_bench_list)

    th = sub.add_parser("theory", help="convergence-analysis utilities")
    th_sub = th.add_subparsers(dest="theory_command", required=True)

    cap = th_sub.add_parser("capacity", help="capacity/condition CSV")
    cap.add_argument("--lengthscale", type=float, default=0.3)
    cap.add_argument("--outputscale", type=float, default=1.0)
    cap.add_argument("--noise-var", dest="noise_var", type=float, default=0.05)
    cap.add_argument("--lo", type=float, default=-1.0)
    cap.add_argument("--hi", type=float, default=1.0)
    cap.add_argument("--grid-size", dest="grid_size", type=int, default=101)
    cap.add_argument("--n-max", dest="n_max", type=int, default=200)
    cap.add_argument("--beta", type=float, default=2.0)
    cap.add_argument("--mean-bound", dest="mean_bound", type=float, default=4.0)
    cap.add_argument("--eps", type=float, default=0.2)
    cap.add_argument("--out", default=None)
    cap.set_defaults(func=_cmd_theory_capacity)

    exp = th_sub.add_parser("expansion", help="expansion fixed point JSON")
    exp.add_argument("--benchmark", default="synthetic1d")
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--grid-size", dest="grid_size", type=int, default=101)
    exp.add_argument("--eps", type=float, default=0.5)
    exp.add_argument("--beta", type=float, default=2.0)
    exp.add_argument("--out", default=None)
    exp.set_defaults(func=_cmd_theory_expansion)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
