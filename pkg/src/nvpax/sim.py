"""Per-frame simulation loop and the runtime scaling benchmark.

Frames are independent (the control loop recomputes from scratch each
cycle), so they may be processed by a worker pool; output rows are ordered
by frame index regardless.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .allocator import RunConfig, optimize, preprocess
from .baselines import greedy_alloc, static_alloc
from .constraints import verify_allocation
from .metrics import (FrameMetrics, Summary, aggregate_run, relative_improvement,
                      satisfaction_ratio, tenant_metrics, useful_utilization)
from .model import PdnTopology
from .trace import (BranchingSpec, SyntheticTraceConfig, TraceFrame,
                    generate_synthetic_hierarchy, generate_trace)

POLICIES = ("nvpax", "static", "greedy")


def _frame_requests(topology: PdnTopology, frame: TraceFrame,
                    cfg: RunConfig) -> dict[str, float]:
    r, _active = preprocess(topology, frame.power, cfg)
    return {d: float(r[i]) for i, d in enumerate(topology.device_order)}


def simulate_frame(topology: PdnTopology, frame: TraceFrame, policies: list[str],
                   cfg: RunConfig) -> FrameMetrics:
    """Run every policy on one frame, audit the allocations, compute metrics."""
    requests = _frame_requests(topology, frame, cfg)

    allocations: dict[str, dict[str, float]] = {}
    wall = None
    for p in policies:
        if p == "nvpax":
            t0 = time.perf_counter()
            result = optimize(topology, frame.power, cfg)
            wall = time.perf_counter() - t0
            allocations[p] = result.allocation
        elif p == "static":
            allocations[p] = static_alloc(topology)
        elif p == "greedy":
            allocations[p] = greedy_alloc(topology, frame.power)
        else:
            raise ValueError(f"unknown policy: {p}")

    util = {p: useful_utilization(requests, a) for p, a in allocations.items()}
    sat = {p: satisfaction_ratio(requests, a) for p, a in allocations.items()}
    improvement: dict[str, float | None] = {}
    if "nvpax" in allocations:
        for p in allocations:
            if p != "nvpax":
                improvement[p] = (relative_improvement(util["nvpax"], util[p])
                                  if util[p] > 0 else None)

    audits = {p: len(verify_allocation(a, topology)) for p, a in allocations.items()}

    tenant = {}
    sla_violations = 0
    if "nvpax" in allocations and topology.tenants:
        tenant = tenant_metrics(topology.tenants, requests, allocations["nvpax"])
        sla_violations = sum(t.min_violated + t.max_violated for t in tenant.values())

    return FrameMetrics(
        timestamp=frame.timestamp,
        utilization=util,
        satisfaction=sat,
        improvement=improvement,
        tenant=tenant,
        sla_violations=sla_violations,
        wall_time_s=wall,
        audit_violations=audits,
    )


def run_simulation(topology: PdnTopology, policies: list[str],
                   trace: list[TraceFrame], cfg: RunConfig | None = None,
                   out_path: str | None = None,
                   workers: int = 1) -> tuple[list[FrameMetrics], dict[str, Summary | None]]:
    """Simulate every frame, optionally writing per-frame rows and a summary."""
    if not trace:
        raise ValueError("empty trace")
    cfg = cfg or RunConfig()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(
                lambda fr: simulate_frame(topology, fr, policies, cfg), trace))
    else:
        frames = [simulate_frame(topology, fr, policies, cfg) for fr in trace]

    summary = aggregate_run(frames)
    if out_path:
        write_results(frames, summary, out_path)
    return frames, summary


def write_results(frames: list[FrameMetrics], summary: dict[str, Summary | None],
                  path: str):
    """One CSV row per (frame, policy), followed by a commented summary block."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame", "timestamp", "policy", "utilization_w",
                         "satisfaction", "improvement_vs_baseline",
                         "wall_ms", "audit_violations", "sla_violations"])
        for i, fm in enumerate(frames):
            for p in fm.utilization:
                sat = fm.satisfaction[p]
                imp = fm.improvement.get(p)
                writer.writerow([
                    i, fm.timestamp, p, f"{fm.utilization[p]:.3f}",
                    "" if sat is None else f"{sat:.6f}",
                    "" if imp is None else f"{imp:.6f}",
                    f"{fm.wall_time_s * 1e3:.2f}" if (p == "nvpax" and fm.wall_time_s) else "",
                    fm.audit_violations.get(p, ""),
                    fm.sla_violations if p == "nvpax" else "",
                ])
        f.write("# summary: metric,mean,std,min,max\n")
        for key, s in summary.items():
            if s is None:
                f.write(f"# {key},,,,\n")
            else:
                f.write(f"# {key},{s.mean:.6f},{s.std:.6f},{s.min:.6f},{s.max:.6f}\n")


@dataclass
class BenchEntry:
    n_devices: int
    runs: int
    mean_ms: float
    std_ms: float


@dataclass
class BenchReport:
    entries: list[BenchEntry]
    exponent: float   # fitted log-log scaling slope across sizes


def run_bench(sizes: list[int], runs_per_size: int = 3, seed: int = 0,
              factor: float = 0.85, cfg: RunConfig | None = None) -> BenchReport:
    """Time full optimize() calls on synthetic hierarchies with one-frame
    synthetic demand; fits the log-log slope of mean time vs size."""
    if len(sizes) < 2:
        raise ValueError("need at least two sizes for the exponent fit")
    if sorted(sizes) != list(sizes):
        raise ValueError("sizes must be strictly increasing")
    cfg = cfg or RunConfig()

    entries: list[BenchEntry] = []
    for si, n in enumerate(sizes):
        times = []
        for run in range(runs_per_size):
            run_seed = seed + 1000 * si + run
            topo = generate_synthetic_hierarchy(n, BranchingSpec(), factor, seed=run_seed)
            trace_cfg = SyntheticTraceConfig(
                frames=1, idle_probability=0.1, active_power_min_w=350.0,
                active_power_max_w=700.0, correlation=0.7, seed=run_seed)
            frame = generate_trace(topo, trace_cfg)[0]
            t0 = time.perf_counter()
            optimize(topo, frame.power, cfg)
            times.append(time.perf_counter() - t0)
        arr = np.array(times) * 1e3
        entries.append(BenchEntry(n_devices=n, runs=runs_per_size,
                                  mean_ms=float(arr.mean()), std_ms=float(arr.std())))

    logn = np.log([e.n_devices for e in entries])
    logt = np.log([e.mean_ms for e in entries])
    slope = float(np.polyfit(logn, logt, 1)[0])
    return BenchReport(entries=entries, exponent=slope)
