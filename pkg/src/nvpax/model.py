"""Domain model: devices, the PDN tree, tenants, and capacity construction.

The power distribution network (PDN) is a rooted tree of capacity nodes.
Devices (controllable power consumers) attach to any node; experiment
topologies attach them at server nodes only. Tenants impose horizontal
aggregate min/max power budgets over arbitrary device sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum


class DeviceState(Enum):
    ACTIVE = "active"
    IDLE = "idle"


@dataclass
class Device:
    """One controllable power consumer.

    l/u are the hard lower/upper power limits in watts, r the (preprocessed)
    request, priority a positive integer (higher = more important), and
    weight a positive scale used by the normalized fairness objective
    (defaults to u).
    """

    id: str
    l: float
    u: float
    r: float | None = None
    priority: int = 1
    state: DeviceState = DeviceState.ACTIVE
    weight: float | None = None

    def __post_init__(self):
        if self.weight is None:
            self.weight = self.u
        if self.r is None:
            self.r = self.l


@dataclass
class PdnNode:
    """A capacity node in the PDN tree."""

    id: str
    capacity: float | None = None
    children: list["PdnNode"] = field(default_factory=list)
    devices: list[str] = field(default_factory=list)


@dataclass
class TenantSla:
    """Aggregate min/max power budget over a device set (horizontal constraint)."""

    id: str
    devices: frozenset[str]
    b_min: float = 0.0
    b_max: float = math.inf

    def __post_init__(self):
        self.devices = frozenset(self.devices)

    @property
    def has_finite_bound(self) -> bool:
        return self.b_min > 0.0 or math.isfinite(self.b_max)


class PdnTopology:
    """Immutable rooted tree of capacity nodes plus the device table and tenants.

    Construction precomputes the node list (preorder), parent links, per-node
    subtree device sets, and a deterministic device ordering (lexicographic by
    id) used as the variable ordering throughout the solver stack.
    """

    def __init__(self, root: PdnNode, devices: dict[str, Device],
                 tenants: list[TenantSla] | None = None):
        self.root = root
        self.devices = dict(devices)
        self.tenants = list(tenants) if tenants else []

        self.nodes: list[PdnNode] = []
        self.parent: dict[str, str | None] = {}
        self._collect(root, None)
        self.node_by_id = {n.id: n for n in self.nodes}

        self.device_order: list[str] = sorted(self.devices)
        self.device_index: dict[str, int] = {d: i for i, d in enumerate(self.device_order)}

        # node id -> set of device ids in its subtree
        self._subtree: dict[str, set[str]] = {}
        self._build_subtrees(root)

        # device id -> id of the node it is attached to
        self.attachment: dict[str, str] = {}
        for n in self.nodes:
            for d in n.devices:
                self.attachment.setdefault(d, n.id)

    def _collect(self, node: PdnNode, parent_id: str | None):
        self.nodes.append(node)
        self.parent[node.id] = parent_id
        for c in node.children:
            self._collect(c, node.id)

    def _build_subtrees(self, node: PdnNode) -> set[str]:
        s = set(node.devices)
        for c in node.children:
            s |= self._build_subtrees(c)
        self._subtree[node.id] = s
        return s

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    def subtree_devices(self, node_id: str) -> set[str]:
        """Device ids attached to the node or any descendant."""
        if node_id not in self._subtree:
            raise KeyError(f"unknown node id: {node_id}")
        return set(self._subtree[node_id])

    def ancestors(self, device_id: str) -> list[str]:
        """Node ids on the path from the device's attachment node to the root."""
        node_id = self.attachment.get(device_id)
        if node_id is None:
            raise KeyError(f"device {device_id} is not attached to any node")
        chain = []
        while node_id is not None:
            chain.append(node_id)
            node_id = self.parent[node_id]
        return chain


def validate_topology(topology: PdnTopology) -> list[str]:
    """Return every structural violation found; an empty list means valid."""
    violations: list[str] = []

    seen_nodes: set[str] = set()
    placed: dict[str, int] = {}

    def walk(node: PdnNode):
        if node.id in seen_nodes:
            violations.append(f"duplicate node id: {node.id}")
        seen_nodes.add(node.id)
        if node.capacity is None or not (node.capacity > 0) or not math.isfinite(node.capacity):
            violations.append(f"non-positive capacity at node {node.id}")
        for d in node.devices:
            placed[d] = placed.get(d, 0) + 1
        for c in node.children:
            walk(c)

    walk(topology.root)

    for d, count in placed.items():
        if count > 1:
            violations.append(f"duplicate device placement: {d}")
        if d not in topology.devices:
            violations.append(f"device {d} attached but missing from device table")
    for d in topology.devices:
        if d not in placed:
            violations.append(f"device {d} in table but not attached to any node")

    for d, dev in topology.devices.items():
        if not (0 <= dev.l <= dev.u) or not math.isfinite(dev.l) or not math.isfinite(dev.u):
            violations.append(f"device {d}: bounds violate 0 <= l <= u (l={dev.l}, u={dev.u})")
        if not (dev.weight > 0):
            violations.append(f"device {d}: non-positive weight")
        if dev.priority < 1:
            violations.append(f"device {d}: priority must be a positive integer")

    for t in topology.tenants:
        if not t.devices:
            violations.append(f"tenant {t.id}: empty device set")
        if t.b_min > t.b_max:
            violations.append(f"tenant {t.id}: b_min > b_max")
        for d in t.devices:
            if d not in topology.devices:
                violations.append(f"unknown device in tenant {t.id}: {d}")

    return violations


def clip_request(r_raw: float, l: float, u: float) -> float:
    """Clip a raw request to the feasible device interval [l, u]."""
    return min(max(r_raw, l), u)


def classify_state(measured_power: float, idle_threshold: float) -> DeviceState:
    """Idle iff measured power is strictly below the threshold."""
    return DeviceState.IDLE if measured_power < idle_threshold else DeviceState.ACTIVE


def compute_oversubscribed_capacities(topology: PdnTopology, factor: float) -> PdnTopology:
    """Fill in capacities bottom-up with hierarchical oversubscription.

    Leaf-owning server nodes get the sum of their devices' maximum limits
    (no oversubscription at server level); every higher node gets
    factor x (sum of child capacities). Returns the same topology object
    with capacities populated.
    """
    if not (0 < factor <= 1):
        raise ValueError(f"oversubscription factor must be in (0, 1], got {factor}")
    if not topology.nodes:
        raise ValueError("empty tree")

    def fill(node: PdnNode) -> float:
        cap = sum(topology.devices[d].u for d in node.devices)
        if node.children:
            child_total = sum(fill(c) for c in node.children)
            cap = cap + factor * child_total
        node.capacity = cap
        return cap

    fill(topology.root)
    return topology


# ---------------------------------------------------------------------------
# Topology file I/O (JSON)
# ---------------------------------------------------------------------------

def _node_to_dict(node: PdnNode) -> dict:
    d: dict = {"id": node.id}
    if node.capacity is not None:
        d["capacity"] = node.capacity
    if node.children:
        d["children"] = [_node_to_dict(c) for c in node.children]
    if node.devices:
        d["devices"] = list(node.devices)
    return d


def topology_to_dict(topology: PdnTopology) -> dict:
    devs = []
    for did in topology.device_order:
        dev = topology.devices[did]
        entry = {"id": dev.id, "l": dev.l, "u": dev.u, "priority": dev.priority}
        if dev.weight != dev.u:
            entry["weight"] = dev.weight
        devs.append(entry)
    tenants = []
    for t in topology.tenants:
        entry: dict = {"id": t.id, "devices": sorted(t.devices)}
        if t.b_min > 0:
            entry["b_min"] = t.b_min
        if math.isfinite(t.b_max):
            entry["b_max"] = t.b_max
        tenants.append(entry)
    return {"nodes": [_node_to_dict(topology.root)], "devices": devs, "tenants": tenants}


def _node_from_dict(d: dict) -> PdnNode:
    return PdnNode(
        id=d["id"],
        capacity=d.get("capacity"),
        children=[_node_from_dict(c) for c in d.get("children", [])],
        devices=list(d.get("devices", [])),
    )


def topology_from_dict(data: dict, factor: float | None = None) -> PdnTopology:
    """Build a topology from its JSON-shaped dict.

    If any node omits its capacity, `factor` must be given and capacities are
    computed via bottom-up oversubscription.
    """
    nodes = data.get("nodes", [])
    if len(nodes) != 1:
        raise ValueError(f"expected exactly one root node, got {len(nodes)}")
    root = _node_from_dict(nodes[0])
    devices = {}
    for d in data.get("devices", []):
        devices[d["id"]] = Device(
            id=d["id"], l=float(d["l"]), u=float(d["u"]),
            priority=int(d.get("priority", 1)),
            weight=float(d["weight"]) if "weight" in d else None,
        )
    tenants = [
        TenantSla(
            id=t["id"], devices=frozenset(t["devices"]),
            b_min=float(t.get("b_min", 0.0)),
            b_max=float(t.get("b_max", math.inf)),
        )
        for t in data.get("tenants", [])
    ]
    topo = PdnTopology(root, devices, tenants)
    if any(n.capacity is None for n in topo.nodes):
        if factor is None:
            raise ValueError("topology omits capacities; an oversubscription factor is required")
        compute_oversubscribed_capacities(topo, factor)
    return topo


def load_topology(path: str, factor: float | None = None) -> PdnTopology:
    with open(path) as f:
        return topology_from_dict(json.load(f), factor=factor)


def save_topology(topology: PdnTopology, path: str):
    with open(path, "w") as f:
        json.dump(topology_to_dict(topology), f, indent=2)
