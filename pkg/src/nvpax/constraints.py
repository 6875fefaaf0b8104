"""Sparse linear inequality system over device power variables.

One column per device (lexicographic id order), one row per PDN node
(subtree sum <= capacity) and one per tenant with any finite bound
(b_min <= tenant sum <= b_max). Device limits live in per-variable bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .model import PdnTopology

# Violation recorded when excess > max(ABS_TOL, REL_TOL * |bound|).
ABS_TOL = 1e-6
REL_TOL = 1e-9


@dataclass
class Row:
    """One linear constraint: lb <= sum(coeff * a) <= ub."""

    cols: np.ndarray        # column indices
    vals: np.ndarray        # coefficients
    lb: float
    ub: float
    tag: tuple[str, str]    # ("node", node_id) or ("tenant", tenant_id) or ("generic", label)


@dataclass
class ConstraintSystem:
    var_index: dict[str, int]
    lower: np.ndarray       # per-variable l
    upper: np.ndarray       # per-variable u
    rows: list[Row] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.var_index)

    def matrix(self) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        """Rows as (A, lb, ub) with A in CSR form."""
        n_rows = len(self.rows)
        cols = np.concatenate([r.cols for r in self.rows]) if n_rows else np.empty(0, dtype=int)
        vals = np.concatenate([r.vals for r in self.rows]) if n_rows else np.empty(0)
        rix = np.concatenate([np.full(len(r.cols), i) for i, r in enumerate(self.rows)]) \
            if n_rows else np.empty(0, dtype=int)
        A = sparse.coo_matrix((vals, (rix, cols)), shape=(n_rows, self.n_vars)).tocsr()
        lb = np.array([r.lb for r in self.rows])
        ub = np.array([r.ub for r in self.rows])
        return A, lb, ub

    def dump(self) -> str:
        """Plain-text rendering of all rows, for debugging."""
        names = {i: d for d, i in self.var_index.items()}
        lines = []
        for r in self.rows:
            terms = " + ".join(f"{v:g}*{names[c]}" for c, v in zip(r.cols, r.vals))
            lines.append(f"[{r.tag[0]}:{r.tag[1]}] {r.lb:g} <= {terms} <= {r.ub:g}")
        return "\n".join(lines)


def build_constraints(topology: PdnTopology) -> ConstraintSystem:
    """Translate a valid topology into its constraint system."""
    idx = topology.device_index
    n = topology.n_devices
    lower = np.array([topology.devices[d].l for d in topology.device_order])
    upper = np.array([topology.devices[d].u for d in topology.device_order])
    system = ConstraintSystem(var_index=dict(idx), lower=lower, upper=upper)

    for node in topology.nodes:
        members = sorted(topology.subtree_devices(node.id))
        if not members:
            continue
        cols = np.array([idx[d] for d in members], dtype=int)
        system.rows.append(Row(cols=cols, vals=np.ones(len(cols)), lb=-math.inf,
                               ub=float(node.capacity), tag=("node", node.id)))

    for t in topology.tenants:
        if not t.has_finite_bound:
            continue  # b_min=0 and b_max=inf is a no-op row
        cols = np.array(sorted(idx[d] for d in t.devices), dtype=int)
        system.rows.append(Row(cols=cols, vals=np.ones(len(cols)), lb=t.b_min,
                               ub=t.b_max, tag=("tenant", t.id)))

    return system


def check_necessary_feasibility(topology: PdnTopology) -> list[str]:
    """Necessary (not sufficient) feasibility conditions; empty report = pass.

    Sufficiency is established by the Phase I solver status.
    """
    report: list[str] = []
    for node in topology.nodes:
        min_load = sum(topology.devices[d].l for d in topology.subtree_devices(node.id))
        if min_load > node.capacity + ABS_TOL:
            report.append(
                f"node {node.id}: minimum load exceeds capacity "
                f"({min_load:g} > {node.capacity:g})")
    for t in topology.tenants:
        max_power = sum(topology.devices[d].u for d in t.devices)
        min_power = sum(topology.devices[d].l for d in t.devices)
        if t.b_min > max_power + ABS_TOL:
            report.append(
                f"tenant {t.id}: b_min unreachable ({t.b_min:g} > sum u = {max_power:g})")
        if t.b_max < min_power - ABS_TOL:
            report.append(
                f"tenant {t.id}: b_max below minimum load ({t.b_max:g} < sum l = {min_power:g})")
    return report


def _tol(bound: float) -> float:
    return max(ABS_TOL, REL_TOL * abs(bound))


def verify_allocation(allocation: dict[str, float], topology: PdnTopology,
                      tolerance: float | None = None) -> list[str]:
    """Post-hoc audit of an allocation against device, node, and tenant rows.

    Returns the list of violated constraints; empty means feasible within
    tolerance. Tolerance defaults to max(ABS_TOL, REL_TOL * |bound|) per row.
    """
    unknown = set(allocation) - set(topology.devices)
    if unknown:
        raise KeyError(f"unknown device ids in allocation: {sorted(unknown)}")
    missing = set(topology.devices) - set(allocation)
    if missing:
        raise KeyError(f"allocation missing devices: {sorted(missing)}")

    def tol(bound: float) -> float:
        return tolerance if tolerance is not None else _tol(bound)

    violations: list[str] = []
    for did in topology.device_order:
        dev = topology.devices[did]
        a = allocation[did]
        if a < dev.l - tol(dev.l):
            violations.append(f"device {did}: a={a:g} below l={dev.l:g}")
        if a > dev.u + tol(dev.u):
            violations.append(f"device {did}: a={a:g} above u={dev.u:g}")
    for node in topology.nodes:
        total = sum(allocation[d] for d in topology.subtree_devices(node.id))
        if total > node.capacity + tol(node.capacity):
            violations.append(
                f"node {node.id}: subtree power {total:g} exceeds capacity {node.capacity:g}")
    for t in topology.tenants:
        total = sum(allocation[d] for d in t.devices)
        if total < t.b_min - tol(t.b_min):
            violations.append(f"tenant {t.id}: power {total:g} below b_min={t.b_min:g}")
        if math.isfinite(t.b_max) and total > t.b_max + tol(t.b_max):
            violations.append(f"tenant {t.id}: power {total:g} above b_max={t.b_max:g}")
    return violations
