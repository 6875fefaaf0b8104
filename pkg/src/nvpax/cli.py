"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 infeasible instance,
3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .allocator import InfeasibleInstance, RunConfig, SolverFailure
from .fixtures import bottleneck_fixture
from .model import load_topology, save_topology, validate_topology
from .sim import run_bench, run_simulation
from .trace import (BranchingSpec, SyntheticTraceConfig, TraceFrame,
                    generate_synthetic_hierarchy, generate_trace, load_trace,
                    save_trace)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3


def _cmd_validate(args) -> int:
    topo = load_topology(args.topology, factor=args.factor)
    violations = validate_topology(topo)
    for v in violations:
        print(f"violation: {v}")
    if violations:
        return EXIT_VALIDATION
    print(f"ok: {len(topo.nodes)} nodes, {topo.n_devices} devices, "
          f"{len(topo.tenants)} tenants")
    return EXIT_OK


def _cmd_generate_topology(args) -> int:
    topo = generate_synthetic_hierarchy(
        args.devices, BranchingSpec(), factor=args.factor, seed=args.seed)
    save_topology(topo, args.out)
    print(f"wrote {args.out}: {topo.n_devices} devices, "
          f"root capacity {topo.root.capacity:.0f} W")
    return EXIT_OK


def _cmd_generate_trace(args) -> int:
    topo = load_topology(args.topology, factor=args.factor)
    cfg = SyntheticTraceConfig(
        frames=args.frames, interval_s=args.interval,
        idle_probability=args.idle_prob,
        active_power_min_w=args.active_min, active_power_max_w=args.active_max,
        correlation=args.correlation, seed=args.seed)
    frames = generate_trace(topo, cfg)
    save_trace(frames, args.out, topo.device_order)
    print(f"wrote {args.out}: {len(frames)} frames x {topo.n_devices} devices")
    return EXIT_OK


def _cmd_run(args) -> int:
    topo = load_topology(args.topology, factor=args.factor)
    violations = validate_topology(topo)
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    trace = load_trace(args.trace, topo)
    cfg = RunConfig(epsilon=args.epsilon, idle_threshold_w=args.idle_threshold,
                    normalized=args.normalized)
    policies = args.policies.split(",")
    try:
        _frames, summary = run_simulation(topo, policies, trace, cfg,
                                          out_path=args.out, workers=args.workers)
    except InfeasibleInstance as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailure as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    for key, s in summary.items():
        if s is not None:
            print(f"{key}: mean={s.mean:.4f} std={s.std:.4f} "
                  f"min={s.min:.4f} max={s.max:.4f}")
    if args.out:
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    try:
        report = run_bench(sizes, runs_per_size=args.runs, seed=args.seed)
    except InfeasibleInstance as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailure as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    for e in report.entries:
        print(f"n={e.n_devices}: mean={e.mean_ms:.1f} ms std={e.std_ms:.1f} ms "
              f"({e.runs} runs)")
    print(f"fitted scaling exponent: {report.exponent:.3f}")
    return EXIT_OK


def _cmd_fixture(args) -> int:
    if args.name != "appendix-a":
        print(f"unknown fixture: {args.name}", file=sys.stderr)
        return EXIT_VALIDATION
    topo, demand = bottleneck_fixture()
    os.makedirs(args.out_dir, exist_ok=True)
    topo_path = os.path.join(args.out_dir, "appendix-a-topology.json")
    trace_path = os.path.join(args.out_dir, "appendix-a-demand.csv")
    save_topology(topo, topo_path)
    save_trace([TraceFrame(timestamp=0.0, power=demand)], trace_path,
               topo.device_order)
    print(f"wrote {topo_path} and {trace_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvpax",
                                     description="Hierarchical power allocation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a topology file")
    p.add_argument("topology")
    p.add_argument("--factor", type=float, default=None,
                   help="oversubscription factor when capacities are omitted")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("generate-topology", help="emit a synthetic hierarchy")
    p.add_argument("--devices", type=int, required=True)
    p.add_argument("--factor", type=float, default=0.85)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate_topology)

    p = sub.add_parser("generate-trace", help="emit a synthetic power trace")
    p.add_argument("--topology", required=True)
    p.add_argument("--factor", type=float, default=None)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--interval", type=float, default=30.0)
    p.add_argument("--idle-prob", type=float, default=0.2)
    p.add_argument("--active-min", type=float, default=300.0)
    p.add_argument("--active-max", type=float, default=700.0)
    p.add_argument("--correlation", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate_trace)

    p = sub.add_parser("run", help="trace-driven simulation")
    p.add_argument("--topology", required=True)
    p.add_argument("--factor", type=float, default=None)
    p.add_argument("--trace", required=True)
    p.add_argument("--policies", default="nvpax,static,greedy")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--idle-threshold", type=float, default=150.0)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench", help="runtime scaling benchmark")
    p.add_argument("--sizes", default="1000,5000,10000")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("fixture", help="emit a golden fixture")
    p.add_argument("name", choices=["appendix-a"])
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=_cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
