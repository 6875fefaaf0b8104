"""Static equal-share and Greedy proportional baseline policies.

Both ignore tenant SLAs; their outputs are audited post-hoc rather than
repaired. Greedy child iteration follows declaration order in the topology,
which matters when proportional shares hit their caps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import PdnNode, PdnTopology, clip_request


def static_alloc(topology: PdnTopology) -> dict[str, float]:
    """Equal share of the root budget, clamped to device bounds.

    The clamp can push the total above the root capacity on skewed bounds;
    callers audit the result instead of repairing it.
    """
    n = topology.n_devices
    if n == 0:
        raise ValueError("topology has no devices")
    share = topology.root.capacity / n
    return {d: clip_request(share, dev.l, dev.u)
            for d, dev in topology.devices.items()}


@dataclass
class GreedyNodeAggregates:
    """Bottom-up per-node sums: minimums L, extra demand E, extra capacity X,
    and the feasible extra weight W = min(E, X)."""

    min_load: dict[str, float] = field(default_factory=dict)      # L_v
    extra_demand: dict[str, float] = field(default_factory=dict)  # E_v
    extra_capacity: dict[str, float] = field(default_factory=dict)  # X_v
    weight: dict[str, float] = field(default_factory=dict)        # W_v


def greedy_aggregate(topology: PdnTopology,
                     demands: dict[str, float]) -> GreedyNodeAggregates:
    """Post-order computation of (L, E, X, W) per node. Demands must be clipped."""
    agg = GreedyNodeAggregates()

    def visit(node: PdnNode) -> tuple[float, float]:
        lo = sum(topology.devices[d].l for d in node.devices)
        extra = sum(demands[d] - topology.devices[d].l for d in node.devices)
        for c in node.children:
            c_lo, c_extra = visit(c)
            lo += c_lo
            extra += c_extra
        x = max(0.0, node.capacity - lo)
        agg.min_load[node.id] = lo
        agg.extra_demand[node.id] = extra
        agg.extra_capacity[node.id] = x
        agg.weight[node.id] = min(extra, x)
        return lo, extra

    visit(topology.root)
    return agg


def greedy_distribute(topology: PdnTopology, aggregates: GreedyNodeAggregates,
                      demands: dict[str, float]) -> dict[str, float]:
    """Recursive top-down proportional split of the root's extra budget.

    Shares are capped at each child's feasible weight (W for nodes, extra
    demand e for devices), with budget and total weight updated after each
    child, so results depend on the declared child order when caps bind.
    """
    alloc = {d: topology.devices[d].l for d in topology.devices}

    def distribute(node: PdnNode, budget: float):
        if budget <= 0:
            return
        w_tot = sum(aggregates.weight[c.id] for c in node.children)
        w_tot += sum(demands[d] - topology.devices[d].l for d in node.devices)
        if w_tot <= 0:
            return
        for c in node.children:
            wc = aggregates.weight[c.id]
            share = min(budget * wc / w_tot, wc)
            distribute(c, share)
            budget -= share
            w_tot -= wc
            if w_tot <= 0:
                return
        for d in node.devices:
            e = demands[d] - topology.devices[d].l
            share = min(budget * e / w_tot, e)
            alloc[d] += share
            budget -= share
            w_tot -= e
            if w_tot <= 0:
                return

    distribute(topology.root, aggregates.weight[topology.root.id])
    return alloc


def greedy_alloc(topology: PdnTopology,
                 requests: dict[str, float]) -> dict[str, float]:
    """Clip, aggregate bottom-up, then distribute top-down.

    Respects device bounds and node capacities by construction; tenant SLA
    rows are not considered.
    """
    demands = {d: clip_request(requests[d], dev.l, dev.u)
               for d, dev in topology.devices.items()}
    agg = greedy_aggregate(topology, demands)
    return greedy_distribute(topology, agg, demands)
