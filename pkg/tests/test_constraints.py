import math

import numpy as np
import pytest

from nvpax import (Device, PdnNode, PdnTopology, TenantSla, build_constraints,
                   check_necessary_feasibility, verify_allocation)
from tests.conftest import flat_topology


def test_single_node_two_devices():
    topo = flat_topology(1000, [(200, 700), (200, 700)])
    system = build_constraints(topo)
    assert len(system.rows) == 1
    row = system.rows[0]
    assert row.tag == ("node", "root")
    assert set(row.cols) == {0, 1}
    assert row.ub == 1000
    assert row.lb == -math.inf


def test_seven_node_rows_for_two_level_layout():
    # utility + 2 halls + 4 racks as nodes; 8 servers as leaf devices
    devices = {}
    halls = []
    k = 0
    for h in range(2):
        racks = []
        for r in range(2):
            ids = [f"srv{k}", f"srv{k+1}"]
            k += 2
            for d in ids:
                devices[d] = Device(id=d, l=0, u=4000)
            racks.append(PdnNode(id=f"h{h}r{r}", capacity=4000, devices=ids))
        halls.append(PdnNode(id=f"hall{h}", capacity=6000, children=racks))
    topo = PdnTopology(PdnNode(id="utility", capacity=10000, children=halls), devices)
    system = build_constraints(topo)
    node_rows = [r for r in system.rows if r.tag[0] == "node"]
    assert len(node_rows) == 7


def test_tenant_rows_with_both_bounds():
    bounds = [(200, 700)] * 100
    tenants = [TenantSla(id=f"t{k}", devices=frozenset({f"d{k}"}),
                         b_min=100, b_max=600) for k in range(100)]
    topo = flat_topology(70000, bounds, tenants=tenants)
    system = build_constraints(topo)
    tenant_rows = [r for r in system.rows if r.tag[0] == "tenant"]
    assert len(tenant_rows) == 100
    # counted as bound-sides, that is 200 one-sided constraints
    sides = sum(int(r.lb > -math.inf) + int(math.isfinite(r.ub)) for r in tenant_rows)
    assert sides == 200


def test_noop_tenant_row_omitted():
    tenants = [TenantSla(id="t0", devices=frozenset({"d0"}))]
    topo = flat_topology(1000, [(200, 700)], tenants=tenants)
    system = build_constraints(topo)
    assert all(r.tag[0] != "tenant" for r in system.rows)


def test_row_count_and_nonzeros(simple_tree):
    system = build_constraints(simple_tree)
    assert len(system.rows) == 3  # rack + 2 servers, no tenants
    nnz = sum(len(r.cols) for r in system.rows)
    assert nnz == 6 + 3 + 3  # root sees all devices, each server its own


def test_chain_depth_membership():
    devices = {"d0": Device(id="d0", l=0, u=100)}
    inner = PdnNode(id="n2", capacity=100, devices=["d0"])
    mid = PdnNode(id="n1", capacity=100, children=[inner])
    root = PdnNode(id="n0", capacity=100, children=[mid])
    system = build_constraints(PdnTopology(root, devices))
    appearances = sum(1 for r in system.rows if 0 in r.cols)
    assert appearances == 3


def test_necessary_feasibility_min_load():
    topo = flat_topology(500, [(200, 700)] * 3)
    report = check_necessary_feasibility(topo)
    assert any("minimum load exceeds capacity" in v for v in report)


def test_necessary_feasibility_tenant_min():
    tenants = [TenantSla(id="t0", devices=frozenset({"d0", "d1"}), b_min=900)]
    topo = flat_topology(2000, [(0, 400), (0, 400)], tenants=tenants)
    report = check_necessary_feasibility(topo)
    assert any("b_min unreachable" in v for v in report)


def test_necessary_feasibility_large_tenant_passes():
    bounds = [(200, 700)] * 100
    tenants = [TenantSla(id="t0", devices=frozenset(f"d{k}" for k in range(100)),
                         b_min=28000, b_max=56000)]
    topo = flat_topology(80000, bounds, tenants=tenants)
    assert check_necessary_feasibility(topo) == []


def test_verify_lists_only_unmet_tenant_minima():
    tenants = [TenantSla(id="t0", devices=frozenset({"d0", "d1"}), b_min=900)]
    topo = flat_topology(2000, [(200, 700), (200, 700)], tenants=tenants)
    alloc = {"d0": 200.0, "d1": 200.0}
    violations = verify_allocation(alloc, topo)
    assert len(violations) == 1
    assert "b_min" in violations[0]


def test_verify_all_at_upper_flags_ancestors():
    devices = {}
    servers = []
    for s in range(2):
        ids = [f"s{s}d{k}" for k in range(2)]
        for d in ids:
            devices[d] = Device(id=d, l=0, u=700)
        servers.append(PdnNode(id=f"srv{s}", capacity=1400, devices=ids))
    root = PdnNode(id="root", capacity=2000, children=servers)  # oversubscribed
    topo = PdnTopology(root, devices)
    alloc = {d: 700.0 for d in devices}
    violations = verify_allocation(alloc, topo)
    assert any("node root" in v for v in violations)
    assert all("srv" not in v for v in violations)


def test_verify_unknown_id_raises(simple_tree):
    with pytest.raises(KeyError):
        verify_allocation({"bogus": 1.0}, simple_tree)


def test_dump_mentions_tags():
    topo = flat_topology(1000, [(200, 700)])
    text = build_constraints(topo).dump()
    assert "node:root" in text
