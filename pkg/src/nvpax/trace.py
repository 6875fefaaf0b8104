"""Trace ingestion and synthetic trace / hierarchy generation.

Trace file format: CSV with header `timestamp,<device-id>,...`, one row per
frame, values in watts. The synthetic generator substitutes real telemetry:
each device follows a seeded two-state (idle/active) Markov process with
temporally correlated active power.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import Device, PdnNode, PdnTopology, compute_oversubscribed_capacities


@dataclass
class TraceFrame:
    timestamp: float
    power: dict[str, float]   # measured power per device id (W)


@dataclass
class SyntheticTraceConfig:
    frames: int
    interval_s: float = 30.0
    idle_probability: float = 0.2
    active_power_min_w: float = 300.0
    active_power_max_w: float = 700.0
    idle_power_max_w: float = 100.0
    correlation: float = 0.8    # in [0, 1)
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.correlation < 1):
            raise ValueError("correlation must be in [0, 1)")
        if not (0 <= self.idle_probability <= 1):
            raise ValueError("idle_probability must be in [0, 1]")
        if self.active_power_min_w > self.active_power_max_w:
            raise ValueError("active power bounds out of order")


def load_trace(path: str, topology: PdnTopology) -> list[TraceFrame]:
    """Parse a trace file; frames sorted by timestamp.

    Unknown device columns are an error; devices missing from a frame read
    0 W (and will classify as idle).
    """
    frames: list[TraceFrame] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trace file") from None
        if not header or header[0] != "timestamp":
            raise ValueError(f"{path}:1: header must start with 'timestamp'")
        ids = header[1:]
        unknown = [d for d in ids if d not in topology.devices]
        if unknown:
            raise KeyError(f"{path}: unknown device columns: {unknown[:5]}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = float(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            power = {d: v for d, v in zip(ids, vals)}
            for d in topology.devices:
                power.setdefault(d, 0.0)
            frames.append(TraceFrame(timestamp=ts, power=power))
    frames.sort(key=lambda fr: fr.timestamp)
    return frames


def save_trace(frames: list[TraceFrame], path: str, device_order: list[str]):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["timestamp"] + device_order)
        for fr in frames:
            writer.writerow([fr.timestamp] + [f"{fr.power[d]:.3f}" for d in device_order])


def generate_trace(topology: PdnTopology, config: SyntheticTraceConfig) -> list[TraceFrame]:
    """Seeded two-state process per device with correlated active power."""
    rng = np.random.default_rng(config.seed)
    order = topology.device_order
    n = len(order)
    u = np.array([topology.devices[d].u for d in order])

    pi_idle = config.idle_probability
    rho = config.correlation
    # transition probs with the requested stationary idle share and memory rho
    p_stay_idle = rho + (1 - rho) * pi_idle
    p_stay_active = rho + (1 - rho) * (1 - pi_idle)

    idle = rng.random(n) < pi_idle
    lo = np.minimum(config.active_power_min_w, u)
    hi = np.minimum(config.active_power_max_w, u)
    level = rng.uniform(lo, hi)

    frames: list[TraceFrame] = []
    for k in range(config.frames):
        if k > 0:
            stay = np.where(idle, p_stay_idle, p_stay_active)
            idle = np.where(rng.random(n) < stay, idle, ~idle)
            level = rho * level + (1 - rho) * rng.uniform(lo, hi)
        power = np.where(idle, rng.uniform(0.0, config.idle_power_max_w, n), level)
        frames.append(TraceFrame(
            timestamp=k * config.interval_s,
            power={d: float(power[i]) for i, d in enumerate(order)},
        ))
    return frames


@dataclass
class BranchingSpec:
    """Shape of a generated hierarchy: root -> halls -> racks -> servers -> devices."""

    devices_per_server: tuple[int, int] = (4, 8)
    servers_per_rack: tuple[int, int] = (2, 6)
    racks_per_hall: tuple[int, int] = (2, 6)
    device_l: float = 200.0
    device_u: float = 700.0


def generate_synthetic_hierarchy(n_devices: int, branching: BranchingSpec | None = None,
                                 factor: float = 0.85, seed: int = 0) -> PdnTopology:
    """Random tree with bounded branching, devices at servers, capacities via
    bottom-up oversubscription. Deterministic under seed."""
    if n_devices < 1:
        raise ValueError("need at least one device")
    spec = branching or BranchingSpec()
    rng = np.random.default_rng(seed)
    width = int(math.ceil(math.log10(max(n_devices, 10))))

    devices: dict[str, Device] = {}
    servers: list[PdnNode] = []
    remaining = n_devices
    while remaining > 0:
        count = min(remaining, int(rng.integers(spec.devices_per_server[0],
                                                spec.devices_per_server[1] + 1)))
        sid = f"server-{len(servers):0{width}d}"
        ids = []
        for _ in range(count):
            did = f"gpu-{len(devices):0{width}d}"
            devices[did] = Device(id=did, l=spec.device_l, u=spec.device_u)
            ids.append(did)
        servers.append(PdnNode(id=sid, devices=ids))
        remaining -= count

    def group(children: list[PdnNode], prefix: str, lohi: tuple[int, int]) -> list[PdnNode]:
        parents: list[PdnNode] = []
        i = 0
        while i < len(children):
            count = min(len(children) - i, int(rng.integers(lohi[0], lohi[1] + 1)))
            parents.append(PdnNode(id=f"{prefix}-{len(parents):0{width}d}",
                                   children=children[i:i + count]))
            i += count
        return parents

    racks = group(servers, "rack", spec.servers_per_rack)
    halls = group(racks, "hall", spec.racks_per_hall)
    root = PdnNode(id="root", children=halls)
    topo = PdnTopology(root, devices)
    return compute_oversubscribed_capacities(topo, factor)
