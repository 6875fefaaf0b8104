"""Three-phase power allocation.

Phase I solves one QP per priority level (highest first), pulling the
current level toward its requests while higher levels stay fixed. Phase II
redistributes surplus to active devices with an iterative max-min LP and
saturation detection; Phase III does the same for idle devices.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import (ABS_TOL, REL_TOL, ConstraintSystem, Row,
                          build_constraints, check_necessary_feasibility)
from .model import DeviceState, PdnTopology, classify_state, clip_request
from .solver import (SLACK_TOL_W, LinearObjective, QuadraticObjective, Sense,
                     SolveStatus, solve_lp, solve_qp)


class AllocationError(Exception):
    """Base error carrying the phase where allocation broke down."""

    def __init__(self, phase: str, message: str):
        self.phase = phase
        super().__init__(f"[{phase}] {message}")


class InfeasibleInstance(AllocationError):
    pass


class SolverFailure(AllocationError):
    pass


@dataclass
class RunConfig:
    epsilon: float = 1e-5
    idle_threshold_w: float = 150.0
    slack_tolerance_w: float = SLACK_TOL_W
    normalized: bool = False
    max_saturation_rounds: int | None = None  # default: |A| per phase


@dataclass
class PhasePartition:
    """Disjoint device partition used by each phase's solve."""

    optimized: set[str]
    fixed: dict[str, float]
    free: set[str]


@dataclass
class AllocationResult:
    allocation: dict[str, float]
    requests: dict[str, float]
    states: dict[str, DeviceState]
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    phase_wall: dict[int, float]
    rounds: dict[int, int]
    qp_levels: int
    total_wall: float


class _Ctx:
    """Precomputed per-topology solve context, shareable across calls."""

    def __init__(self, topology: PdnTopology, cfg: RunConfig):
        self.topology = topology
        self.cfg = cfg
        self.system: ConstraintSystem = build_constraints(topology)
        self.A_csr, self.row_lb, self.row_ub = self.system.matrix()
        bound_mag = np.maximum(
            np.where(np.isfinite(self.row_lb), np.abs(self.row_lb), 0.0),
            np.where(np.isfinite(self.row_ub), np.abs(self.row_ub), 0.0))
        self.row_tol = np.maximum(ABS_TOL, REL_TOL * bound_mag)

        self.l = self.system.lower
        self.u = self.system.upper
        order = topology.device_order
        self.w = np.array([topology.devices[d].weight for d in order])
        self.prio = np.array([topology.devices[d].priority for d in order])
        self.var_tol = np.maximum(ABS_TOL, REL_TOL * np.maximum(np.abs(self.l), np.abs(self.u)))

        # upper-bounded rows touching each device column, for saturation slack
        n = len(order)
        self.rows_by_dev: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        buckets: list[list[int]] = [[] for _ in range(n)]
        self.ub_rows = [i for i, r in enumerate(self.system.rows) if math.isfinite(r.ub)]
        for i in self.ub_rows:
            for c in self.system.rows[i].cols:
                buckets[c].append(i)
        for c in range(n):
            self.rows_by_dev[c] = np.array(buckets[c], dtype=int)

        self.has_tenant_min = any(t.b_min > 0 for t in topology.tenants)

    def row_sums(self, a: np.ndarray) -> np.ndarray:
        return self.A_csr @ a

    def feasible(self, a: np.ndarray) -> bool:
        if np.any(a < self.l - self.var_tol) or np.any(a > self.u + self.var_tol):
            return False
        sums = self.row_sums(a)
        if np.any(sums > self.row_ub + self.row_tol):
            return False
        if np.any(sums < self.row_lb - self.row_tol):
            return False
        return True

    def device_slacks(self, a: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Min slack per device over its own upper bound and every
        upper-bounded row (ancestor capacities, tenant maxima) containing it."""
        sums = self.row_sums(a)
        row_slack = self.row_ub - sums
        out = self.u[cols] - a[cols]
        for k, c in enumerate(cols):
            rows = self.rows_by_dev[c]
            if len(rows):
                out[k] = min(out[k], row_slack[rows].min())
        return out


def preprocess(topology: PdnTopology, measured: dict[str, float],
               cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """Clip measured powers to device bounds and classify active/idle.

    Returns (requests, active_mask) in device order; idle requests are l.
    """
    missing = set(topology.devices) - set(measured)
    if missing:
        raise KeyError(f"missing measured power for devices: {sorted(missing)[:5]}")
    n = topology.n_devices
    r = np.empty(n)
    active = np.empty(n, dtype=bool)
    for i, did in enumerate(topology.device_order):
        dev = topology.devices[did]
        m = measured[did]
        active[i] = classify_state(m, cfg.idle_threshold_w) == DeviceState.ACTIVE
        r[i] = clip_request(m, dev.l, dev.u) if active[i] else dev.l
    return r, active


def phase1(topology: PdnTopology, requests: np.ndarray, active: np.ndarray,
           cfg: RunConfig, ctx: _Ctx | None = None) -> np.ndarray:
    """Priority-ordered request satisfaction; returns a^(1) in device order."""
    ctx = ctx or _Ctx(topology, cfg)
    n = topology.n_devices
    l, u, w, prio = ctx.l, ctx.u, ctx.w, ctx.prio
    scale = 1.0 / w ** 2 if cfg.normalized else np.ones(n)
    a = l.copy()

    levels: list[int | None] = sorted({int(p) for p in prio[active]}, reverse=True)
    if not levels and ctx.has_tenant_min:
        # no active devices: one solve to lift idles to any forced tenant minima
        levels = [None]

    for p in levels:
        if p is None:
            A = np.zeros(n, dtype=bool)
            F = np.zeros(n, dtype=bool)
        else:
            A = active & (prio == p)
            F = active & (prio > p)
        L = ~(A | F)

        quad = np.zeros(n)
        lin = np.zeros(n)
        quad[A] = scale[A]
        lin[A] = -2.0 * scale[A] * requests[A]
        fixed = {int(i): float(a[i]) for i in np.flatnonzero(F)}
        if ctx.has_tenant_min:
            quad[L] = cfg.epsilon * scale[L]
            lin[L] = -2.0 * cfg.epsilon * scale[L] * l[L]
        else:
            # no tenant lower bound can lift them: pin at l, drop regularizer
            for i in np.flatnonzero(L):
                fixed[int(i)] = float(l[i])

        res = solve_qp(QuadraticObjective(quad=quad, lin=lin), ctx.system, fixed)
        if res.status == SolveStatus.INFEASIBLE and fixed:
            # values pinned by earlier levels can leave rows exactly tight and
            # the subproblem borderline; retry with sub-tolerance slack
            res = solve_qp(QuadraticObjective(quad=quad, lin=lin), ctx.system,
                           fixed, relax_rows=True)
        if res.status == SolveStatus.INFEASIBLE:
            raise InfeasibleInstance("phase1", f"QP infeasible at priority level {p}")
        if res.status != SolveStatus.OPTIMAL:
            raise SolverFailure("phase1", f"QP failed at priority level {p}: {res.status}")
        a = np.clip(res.x, l, u)
        for i, v in fixed.items():
            a[i] = v
    return a


def detect_saturated(topology: PdnTopology, allocation: dict[str, float],
                     candidates: set[str], slack_tolerance: float = SLACK_TOL_W) -> set[str]:
    """Devices in `candidates` with no positive slack to receive more power."""
    cfg = RunConfig(slack_tolerance_w=slack_tolerance)
    ctx = _Ctx(topology, cfg)
    a = np.array([allocation[d] for d in topology.device_order])
    cols = np.array([topology.device_index[d] for d in sorted(candidates)], dtype=int)
    if not len(cols):
        return set()
    slacks = ctx.device_slacks(a, cols)
    return {topology.device_order[c] for c, s in zip(cols, slacks) if s <= slack_tolerance}


def _surplus_loop(ctx: _Ctx, a_start: np.ndarray, opt_cols: np.ndarray,
                  free_cols: np.ndarray, phase: str,
                  cfg: RunConfig) -> tuple[np.ndarray, int]:
    """Iterative max-min LP with saturation detection.

    Maximizes the minimum (weighted) increment over `opt_cols` relative to
    a_start; devices outside opt_cols and free_cols stay fixed. Each round
    adopts the equalized point ref + t* (falling back to the LP vertex if a
    tenant minimum makes that infeasible), freezes devices without slack,
    and re-solves for the rest.
    """
    n = ctx.system.n_vars
    a = a_start.copy()
    ref = a_start.copy()
    tol = cfg.slack_tolerance_w
    wvec = ctx.w if cfg.normalized else np.ones(n)

    active = list(int(c) for c in opt_cols)
    free = set(int(c) for c in free_cols)
    loose = free | set(active)
    fixed = {c: float(a[c]) for c in range(n) if c not in loose}

    max_rounds = cfg.max_saturation_rounds or max(1, len(active))
    rounds = 0
    while active and rounds < max_rounds:
        # freeze anything already without slack before solving
        cols = np.array(active, dtype=int)
        slacks = ctx.device_slacks(a, cols)
        stuck = [int(c) for c, s in zip(cols, slacks) if s <= tol]
        if stuck:
            stuck_set = set(stuck)
            for c in stuck:
                fixed[c] = float(a[c])
            active = [c for c in active if c not in stuck_set]
            if not active:
                break
            continue

        rounds += 1
        coeffs = {c: cfg.epsilon for c in active}
        for c in free:
            coeffs[c] = -cfg.epsilon
        obj = LinearObjective(sense=Sense.MAXIMIZE, coeffs=coeffs, t_coef=1.0)
        extra = [Row(cols=np.array([c, n]), vals=np.array([-1.0, wvec[c]]),
                     lb=-math.inf, ub=float(-ref[c]), tag=("improve", str(c)))
                 for c in active]
        res = solve_lp(obj, ctx.system, extra_rows=extra, fixed=fixed)
        if res.status == SolveStatus.INFEASIBLE:
            # the reference point can sit ~1e-9 outside a tight row after the
            # preceding solve; retry with sub-tolerance slack
            res = solve_lp(obj, ctx.system, extra_rows=extra, fixed=fixed,
                           relax_rows=True)
        if res.status == SolveStatus.INFEASIBLE:
            raise InfeasibleInstance(phase, "surplus LP infeasible")
        if res.status != SolveStatus.OPTIMAL:
            raise SolverFailure(phase, f"surplus LP failed: {res.status}")
        x = res.x
        t_star = max(0.0, float(x[n]))

        prev_sum = a[active].sum()
        cand = a.copy()
        cand[active] = ref[active] + t_star * wvec[active]
        if free:
            fl = np.array(sorted(free), dtype=int)
            cand[fl] = np.clip(x[fl], ctx.l[fl], ctx.u[fl])
        if ctx.feasible(cand):
            a = cand
        else:
            # tenant minimum needed the LP's uneven split; keep the vertex
            a = np.clip(x[:n], ctx.l, ctx.u)
            for c, v in fixed.items():
                a[c] = v

        if t_star <= tol and a[active].sum() - prev_sum <= tol:
            break

        cols = np.array(active, dtype=int)
        slacks = ctx.device_slacks(a, cols)
        newly = [int(c) for c, s in zip(cols, slacks) if s <= tol]
        if not newly:
            # degenerate alternate optimum: force progress on the tightest device
            newly = [int(cols[int(np.argmin(slacks))])]
        newly_set = set(newly)
        for c in newly:
            fixed[c] = float(a[c])
        active = [c for c in active if c not in newly_set]

    return a, rounds


def phase2(topology: PdnTopology, a1: np.ndarray, active: np.ndarray,
           cfg: RunConfig, ctx: _Ctx | None = None) -> tuple[np.ndarray, int]:
    """Max-min surplus redistribution to active devices; idles stay free."""
    ctx = ctx or _Ctx(topology, cfg)
    opt_cols = np.flatnonzero(active)
    free_cols = np.flatnonzero(~active) if ctx.has_tenant_min else np.empty(0, dtype=int)
    if not len(opt_cols):
        return a1.copy(), 0
    return _surplus_loop(ctx, a1, opt_cols, free_cols, "phase2", cfg)


def phase3(topology: PdnTopology, a2: np.ndarray, active: np.ndarray,
           cfg: RunConfig, ctx: _Ctx | None = None) -> tuple[np.ndarray, int]:
    """Max-min surplus redistribution to idle devices; actives stay fixed."""
    ctx = ctx or _Ctx(topology, cfg)
    opt_cols = np.flatnonzero(~active)
    if not len(opt_cols):
        return a2.copy(), 0
    return _surplus_loop(ctx, a2, opt_cols, np.empty(0, dtype=int), "phase3", cfg)


def optimize(topology: PdnTopology, measured: dict[str, float],
             cfg: RunConfig | None = None) -> AllocationResult:
    """Full allocation: preprocessing, then Phases I, II, III."""
    cfg = cfg or RunConfig()
    report = check_necessary_feasibility(topology)
    if report:
        raise InfeasibleInstance("preflight", "; ".join(report))

    t_all = time.perf_counter()
    ctx = _Ctx(topology, cfg)
    requests, active = preprocess(topology, measured, cfg)

    t0 = time.perf_counter()
    a1 = phase1(topology, requests, active, cfg, ctx)
    t1 = time.perf_counter()
    a2, rounds2 = phase2(topology, a1, active, cfg, ctx)
    t2 = time.perf_counter()
    a3, rounds3 = phase3(topology, a2, active, cfg, ctx)
    t3 = time.perf_counter()

    order = topology.device_order
    n_levels = len({int(p) for p in ctx.prio[active]})
    return AllocationResult(
        allocation={d: float(a3[i]) for i, d in enumerate(order)},
        requests={d: float(requests[i]) for i, d in enumerate(order)},
        states={d: (DeviceState.ACTIVE if active[i] else DeviceState.IDLE)
                for i, d in enumerate(order)},
        a1=a1, a2=a2, a3=a3,
        phase_wall={1: t1 - t0, 2: t2 - t1, 3: t3 - t2},
        rounds={2: rounds2, 3: rounds3},
        qp_levels=n_levels,
        total_wall=time.perf_counter() - t_all,
    )
