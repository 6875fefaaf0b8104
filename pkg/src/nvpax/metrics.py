"""Evaluation quantities, per frame and aggregated over a run.

Undefined metrics (zero demand, degenerate tenant bounds) are reported as
None, never 0, so they cannot pollute run means. Ratios are stored as
fractions; formatting as percentages happens at the output layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constraints import ABS_TOL, REL_TOL
from .model import TenantSla


@dataclass
class TenantMetrics:
    satisfaction: float | None   # S_k, None when the tenant demanded nothing
    margin: float | None         # lower-bound headroom, None when bounds degenerate
    min_violated: bool
    max_violated: bool


@dataclass
class FrameMetrics:
    timestamp: float
    utilization: dict[str, float]                 # policy -> U (W)
    satisfaction: dict[str, float | None]         # policy -> S
    improvement: dict[str, float | None]          # baseline policy -> relative gain (fraction)
    tenant: dict[str, TenantMetrics] = field(default_factory=dict)
    sla_violations: int = 0
    wall_time_s: float | None = None              # allocator call only
    audit_violations: dict[str, int] = field(default_factory=dict)


def _check_ids(requests: dict[str, float], allocation: dict[str, float]):
    if set(requests) != set(allocation):
        raise KeyError("requests and allocation cover different device sets")


def useful_utilization(requests: dict[str, float],
                       allocation: dict[str, float]) -> float:
    """Total allocated power capped by request: sum min(r_i, a_i)."""
    _check_ids(requests, allocation)
    return sum(min(requests[d], allocation[d]) for d in requests)


def satisfaction_ratio(requests: dict[str, float],
                       allocation: dict[str, float]) -> float | None:
    """Fraction of aggregate demand actually met; None when demand is zero."""
    total = sum(requests.values())
    if total <= 0:
        return None
    return useful_utilization(requests, allocation) / total


def relative_improvement(u_policy: float, u_baseline: float) -> float:
    """(U_policy - U_baseline) / U_baseline, as a fraction."""
    if u_baseline <= 0:
        raise ValueError("baseline utilization must be positive")
    return (u_policy - u_baseline) / u_baseline


def tenant_metrics(tenants: list[TenantSla], requests: dict[str, float],
                   allocation: dict[str, float]) -> dict[str, TenantMetrics]:
    """Per-tenant satisfaction, lower-bound margin, and violation flags."""
    out: dict[str, TenantMetrics] = {}
    for t in tenants:
        total_r = sum(requests[d] for d in t.devices)
        total_a = sum(allocation[d] for d in t.devices)
        sat = None
        if total_r > 0:
            sat = sum(min(requests[d], allocation[d]) for d in t.devices) / total_r
        margin = None
        if math.isfinite(t.b_max) and t.b_max > t.b_min:
            margin = (total_a - t.b_min) / (t.b_max - t.b_min)
        tol_min = max(ABS_TOL, REL_TOL * abs(t.b_min))
        tol_max = max(ABS_TOL, REL_TOL * abs(t.b_max)) if math.isfinite(t.b_max) else 0.0
        out[t.id] = TenantMetrics(
            satisfaction=sat,
            margin=margin,
            min_violated=total_a < t.b_min - tol_min,
            max_violated=math.isfinite(t.b_max) and total_a > t.b_max + tol_max,
        )
    return out


@dataclass
class Summary:
    mean: float
    std: float
    min: float
    max: float


def _summarize(values: list[float]) -> Summary | None:
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    return Summary(mean=mean, std=math.sqrt(var), min=min(vals), max=max(vals))


def aggregate_run(frames: list[FrameMetrics]) -> dict[str, Summary | None]:
    """Run-level summary: moments per scalar metric, plus the two-stage tenant
    margin aggregates (per-frame mean over tenants, and per-frame minimum)."""
    if not frames:
        raise ValueError("empty frame metrics list")
    out: dict[str, Summary | None] = {}

    policies = sorted({p for f in frames for p in f.utilization})
    for p in policies:
        out[f"utilization_w/{p}"] = _summarize([f.utilization.get(p) for f in frames])
        out[f"satisfaction/{p}"] = _summarize([f.satisfaction.get(p) for f in frames])
    baselines = sorted({p for f in frames for p in f.improvement})
    for p in baselines:
        out[f"improvement_vs/{p}"] = _summarize([f.improvement.get(p) for f in frames])

    if any(f.tenant for f in frames):
        frame_mean_margin, frame_min_margin = [], []
        for f in frames:
            margins = [t.margin for t in f.tenant.values() if t.margin is not None]
            if margins:
                frame_mean_margin.append(sum(margins) / len(margins))
                frame_min_margin.append(min(margins))
        out["tenant_margin_mean"] = _summarize(frame_mean_margin)
        out["tenant_margin_worst"] = _summarize(frame_min_margin)
        out["sla_violations"] = _summarize([float(f.sla_violations) for f in frames])

    out["wall_time_s"] = _summarize([f.wall_time_s for f in frames])
    return out
