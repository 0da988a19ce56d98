"""Closed-loop robotic vehicle simulation with sensor spoofing."""
from .hazard import HazardReport, classify_outcome, run_scenario, trace_text
from .loop import (
    ControlOutput,
    EstimatedState,
    InstantPolicy,
    LongTermPolicy,
    RvMap,
    Trace,
    control,
    perceive,
    plan,
    run_loop,
)
from .scenario import LoopParams, Scenario, load_scenario, load_shipped, parse_scenario, shipped_scenarios
from .world import (
    EnvironmentState,
    OperationState,
    SpoofSpec,
    SystemState,
    apply_spoofs,
    parse_spoofs,
    render_frames,
)

__all__ = [
    "ControlOutput", "EnvironmentState", "EstimatedState", "HazardReport", "InstantPolicy",
    "LongTermPolicy", "LoopParams", "OperationState", "RvMap", "Scenario", "SpoofSpec",
    "SystemState", "Trace", "apply_spoofs", "classify_outcome", "control", "load_scenario",
    "load_shipped", "parse_scenario", "parse_spoofs", "perceive", "plan", "render_frames",
    "run_loop", "run_scenario", "shipped_scenarios", "trace_text",
]
