import time

import numpy as np
import pytest

from nvpax import (BranchingSpec, RunConfig, SyntheticTraceConfig, TraceFrame,
                   generate_synthetic_hierarchy, generate_trace, load_trace,
                   run_bench, run_simulation, save_trace, simulate_frame)
from tests.conftest import flat_topology


# ---------------------------------------------------------------------------
# Trace I/O
# ---------------------------------------------------------------------------

def _write(tmp_path, text):
    p = tmp_path / "trace.csv"
    p.write_text(text)
    return str(p)


def test_load_trace_basic(tmp_path):
    topo = flat_topology(1000, [(0, 700)] * 2)
    path = _write(tmp_path, "timestamp,d0,d1\n0,500,80\n30,480,90\n")
    frames = load_trace(path, topo)
    assert len(frames) == 2
    assert frames[0].power == {"d0": 500.0, "d1": 80.0}
    assert frames[1].timestamp == 30.0


def test_load_trace_sorts_by_timestamp(tmp_path):
    topo = flat_topology(1000, [(0, 700)])
    path = _write(tmp_path, "timestamp,d0\n60,1\n0,2\n30,3\n")
    frames = load_trace(path, topo)
    assert [f.timestamp for f in frames] == [0.0, 30.0, 60.0]


def test_load_trace_missing_device_defaults_idle(tmp_path):
    topo = flat_topology(1000, [(0, 700)] * 2)
    path = _write(tmp_path, "timestamp,d0\n0,500\n")
    frames = load_trace(path, topo)
    assert frames[0].power["d1"] == 0.0


def test_load_trace_unknown_column(tmp_path):
    topo = flat_topology(1000, [(0, 700)])
    path = _write(tmp_path, "timestamp,d0,ghost\n0,1,2\n")
    with pytest.raises(KeyError):
        load_trace(path, topo)


def test_load_trace_bad_header_and_bad_value(tmp_path):
    topo = flat_topology(1000, [(0, 700)])
    with pytest.raises(ValueError):
        load_trace(_write(tmp_path, "time,d0\n0,1\n"), topo)
    with pytest.raises(ValueError, match=":2:"):
        load_trace(_write(tmp_path, "timestamp,d0\n0,oops\n"), topo)


def test_trace_roundtrip(tmp_path):
    topo = flat_topology(1000, [(0, 700)] * 3)
    frames = generate_trace(topo, SyntheticTraceConfig(frames=5, seed=3))
    path = str(tmp_path / "out.csv")
    save_trace(frames, path, topo.device_order)
    back = load_trace(path, topo)
    for a, b in zip(frames, back):
        assert a.timestamp == b.timestamp
        for d in topo.device_order:
            assert b.power[d] == pytest.approx(a.power[d], abs=1e-3)


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

def test_generate_trace_deterministic():
    topo = flat_topology(5000, [(0, 700)] * 8)
    cfg = SyntheticTraceConfig(frames=10, seed=11)
    t1 = generate_trace(topo, cfg)
    t2 = generate_trace(topo, cfg)
    assert all(a.power == b.power for a, b in zip(t1, t2))


def test_generate_trace_idle_probability_extremes():
    topo = flat_topology(5000, [(0, 700)] * 8)
    all_idle = generate_trace(topo, SyntheticTraceConfig(
        frames=20, idle_probability=1.0, idle_power_max_w=100, seed=1))
    assert max(v for f in all_idle for v in f.power.values()) < 100
    all_active = generate_trace(topo, SyntheticTraceConfig(
        frames=20, idle_probability=0.0, active_power_min_w=300, seed=1))
    assert min(v for f in all_active for v in f.power.values()) >= 300


def test_generate_trace_idle_share_near_stationary():
    topo = flat_topology(1e9, [(0, 700)] * 50)
    cfg = SyntheticTraceConfig(frames=400, idle_probability=0.3,
                               correlation=0.5, seed=5)
    frames = generate_trace(topo, cfg)
    idle = np.mean([[v < 150 for v in f.power.values()] for f in frames])
    assert idle == pytest.approx(0.3, abs=0.05)


def test_hierarchy_deterministic_and_oversubscribed():
    t1 = generate_synthetic_hierarchy(200, seed=9)
    t2 = generate_synthetic_hierarchy(200, seed=9)
    assert t1.device_order == t2.device_order
    assert t1.root.capacity == t2.root.capacity
    total_u = sum(d.u for d in t1.devices.values())
    assert total_u / t1.root.capacity == pytest.approx(1 / 0.85 ** 3, rel=1e-9)


def test_hierarchy_device_count_and_levels():
    topo = generate_synthetic_hierarchy(57, seed=2)
    assert topo.n_devices == 57
    kinds = {i.split("-")[0] for i in topo.node_by_id}
    assert kinds == {"root", "hall", "rack", "server"}


def test_hierarchy_scales_to_1e5_quickly():
    t0 = time.perf_counter()
    topo = generate_synthetic_hierarchy(100_000, seed=0)
    assert topo.n_devices == 100_000
    assert time.perf_counter() - t0 < 5.0


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def test_simulate_frame_policies_and_audits():
    topo = flat_topology(1500, [(0, 700)] * 4)
    frame = TraceFrame(timestamp=0, power={d: 500.0 for d in topo.device_order})
    fm = simulate_frame(topo, frame, ["nvpax", "static", "greedy"], RunConfig())
    assert set(fm.utilization) == {"nvpax", "static", "greedy"}
    assert fm.utilization["nvpax"] >= fm.utilization["static"] - 1e-6
    assert all(v == 0 for v in fm.audit_violations.values())
    assert fm.wall_time_s is not None and fm.wall_time_s > 0
    assert set(fm.improvement) == {"static", "greedy"}


def test_run_simulation_frame_order_independent_of_workers():
    topo = flat_topology(2000, [(0, 700)] * 6)
    trace = generate_trace(topo, SyntheticTraceConfig(frames=8, seed=21))
    seq, _ = run_simulation(topo, ["nvpax", "static"], trace, workers=1)
    par, _ = run_simulation(topo, ["nvpax", "static"], trace, workers=4)
    assert [f.timestamp for f in par] == [f.timestamp for f in seq]
    for a, b in zip(seq, par):
        assert a.utilization["nvpax"] == pytest.approx(b.utilization["nvpax"], abs=1e-6)


def test_run_simulation_writes_results(tmp_path):
    topo = flat_topology(2000, [(0, 700)] * 6)
    trace = generate_trace(topo, SyntheticTraceConfig(frames=3, seed=1))
    out = tmp_path / "results.csv"
    frames, summary = run_simulation(topo, ["nvpax", "static"], trace,
                                     out_path=str(out))
    text = out.read_text()
    lines = text.splitlines()
    assert lines[0].startswith("frame,timestamp,policy,utilization_w")
    assert sum(1 for ln in lines if not ln.startswith("#") and ln) == 1 + 3 * 2
    assert any(ln.startswith("# utilization_w/nvpax") for ln in lines)
    assert summary["utilization_w/nvpax"] is not None


def test_run_simulation_empty_trace():
    topo = flat_topology(1000, [(0, 700)])
    with pytest.raises(ValueError):
        run_simulation(topo, ["nvpax"], [])


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

def test_bench_sanity():
    report = run_bench([50, 100], runs_per_size=2, seed=0)
    assert [e.n_devices for e in report.entries] == [50, 100]
    assert all(e.mean_ms > 0 for e in report.entries)
    assert np.isfinite(report.exponent)


def test_bench_rejects_bad_sizes():
    with pytest.raises(ValueError):
        run_bench([100])
    with pytest.raises(ValueError):
        run_bench([100, 50])
