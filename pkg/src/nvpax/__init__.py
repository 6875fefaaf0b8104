"""Hierarchical power allocation: three-phase QP/LP policy, baselines,
metrics, and a trace-driven simulator."""

from .allocator import (AllocationError, AllocationResult, InfeasibleInstance,
                        RunConfig, SolverFailure, detect_saturated, optimize,
                        phase1, phase2, phase3, preprocess)
from .baselines import (GreedyNodeAggregates, greedy_aggregate, greedy_alloc,
                        greedy_distribute, static_alloc)
from .constraints import (ConstraintSystem, build_constraints,
                          check_necessary_feasibility, verify_allocation)
from .metrics import (FrameMetrics, aggregate_run, relative_improvement,
                      satisfaction_ratio, tenant_metrics, useful_utilization)
from .model import (Device, DeviceState, PdnNode, PdnTopology, TenantSla,
                    classify_state, clip_request,
                    compute_oversubscribed_capacities, load_topology,
                    save_topology, validate_topology)
from .sim import BenchReport, run_bench, run_simulation, simulate_frame
from .trace import (BranchingSpec, SyntheticTraceConfig, TraceFrame,
                    generate_synthetic_hierarchy, generate_trace, load_trace,
                    save_trace)

__all__ = [name for name in dir() if not name.startswith("_")]
