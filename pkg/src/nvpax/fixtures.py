"""Golden test fixtures.

The non-uniform bottleneck fixture: a 10 kW datacenter over three 6 kW
racks where rack A hides a tight 2.5 kW server behind 4.5 kW of demand.
Proportional splitting over-commits to rack A and wastes budget at the
internal bottleneck; a global optimizer redirects it to racks B and C.
Device bounds are l = 0, u = demand; all devices active at priority 1.
"""

from __future__ import annotations

from .model import Device, PdnNode, PdnTopology


def bottleneck_fixture() -> tuple[PdnTopology, dict[str, float]]:
    """Returns (topology, per-device demand in watts)."""
    devices: dict[str, Device] = {}
    demand: dict[str, float] = {}

    def make(prefix: str, count: int, watts: float) -> list[str]:
        ids = []
        for k in range(count):
            did = f"{prefix}-{k:02d}"
            devices[did] = Device(id=did, l=0.0, u=watts)
            demand[did] = watts
            ids.append(did)
        return ids

    sa1 = PdnNode(id="server-a1", capacity=2500.0, devices=make("a1", 6, 750.0))
    sa2 = PdnNode(id="server-a2", capacity=2500.0, devices=make("a2", 3, 150.0))
    sb1 = PdnNode(id="server-b1", capacity=6000.0, devices=make("b1", 10, 350.0))
    sc1 = PdnNode(id="server-c1", capacity=6000.0, devices=make("c1", 10, 350.0))

    rack_a = PdnNode(id="rack-a", capacity=6000.0, children=[sa1, sa2])
    rack_b = PdnNode(id="rack-b", capacity=6000.0, children=[sb1])
    rack_c = PdnNode(id="rack-c", capacity=6000.0, children=[sc1])
    root = PdnNode(id="datacenter", capacity=10000.0, children=[rack_a, rack_b, rack_c])

    return PdnTopology(root, devices), demand
