#!/usr/bin/env python3
"""Multi-tenant SLA experiment on a synthetic hierarchy.

Tenants stripe across servers, each with an aggregate power band
[b_min, b_max] set to a fraction of the tenant's maximum draw. Reports
per-frame SLA violations and the two-stage tenant margin aggregates.
"""

import argparse

from nvpax import (Device, PdnNode, PdnTopology, SyntheticTraceConfig,
                   TenantSla, compute_oversubscribed_capacities, generate_trace,
                   run_simulation)


def build_topology(n_tenants: int, devices_per_tenant: int,
                   band: tuple[float, float], factor: float) -> PdnTopology:
    n = n_tenants * devices_per_tenant
    devices = {}
    servers = []
    per_server = 8
    for s in range((n + per_server - 1) // per_server):
        ids = []
        for k in range(s * per_server, min(n, (s + 1) * per_server)):
            did = f"gpu-{k:04d}"
            devices[did] = Device(id=did, l=200.0, u=700.0)
            ids.append(did)
        servers.append(PdnNode(id=f"server-{s:03d}", devices=ids))
    racks = [PdnNode(id=f"rack-{r:02d}", children=servers[r * 5:(r + 1) * 5])
             for r in range((len(servers) + 4) // 5)]
    root = PdnNode(id="root", children=racks)

    tenant_max = devices_per_tenant * 700.0
    tenants = [
        TenantSla(id=f"tenant-{t:02d}",
                  devices=frozenset(f"gpu-{i:04d}" for i in range(n)
                                    if i % n_tenants == t),
                  b_min=band[0] * tenant_max, b_max=band[1] * tenant_max)
        for t in range(n_tenants)
    ]
    topo = PdnTopology(root, devices, tenants)
    return compute_oversubscribed_capacities(topo, factor)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tenants", type=int, default=10)
    parser.add_argument("--devices-per-tenant", type=int, default=20)
    parser.add_argument("--band", type=float, nargs=2, default=(0.4, 0.8),
                        metavar=("MIN", "MAX"),
                        help="tenant bounds as fractions of tenant max draw")
    parser.add_argument("--frames", type=int, default=200)
    parser.add_argument("--idle-prob", type=float, default=0.3)
    parser.add_argument("--factor", type=float, default=0.85)
    parser.add_argument("--seed", type=int, default=55)
    parser.add_argument("--out", default=None, help="per-frame results CSV")
    args = parser.parse_args()

    topo = build_topology(args.tenants, args.devices_per_tenant,
                          tuple(args.band), args.factor)
    print(f"{topo.n_devices} devices, {len(topo.tenants)} tenants, "
          f"root capacity {topo.root.capacity / 1e3:.1f} kW")

    trace = generate_trace(topo, SyntheticTraceConfig(
        frames=args.frames, idle_probability=args.idle_prob, seed=args.seed))
    frames, summary = run_simulation(topo, ["nvpax"], trace, out_path=args.out)

    violations = sum(f.sla_violations for f in frames)
    print(f"frames: {len(frames)}, total SLA violations: {violations}")
    for key in ("satisfaction/nvpax", "tenant_margin_mean",
                "tenant_margin_worst", "wall_time_s"):
        s = summary.get(key)
        if s:
            print(f"{key}: mean={s.mean:.4f} min={s.min:.4f} max={s.max:.4f}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
