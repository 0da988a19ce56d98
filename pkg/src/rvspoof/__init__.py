"""Sensor-spoofing threat modelling and attack toolkit for robotic vehicles."""
__version__ = "0.1.0"

from .catalog import AttackVectorRecord, Catalog, CoverageReport, coverage_report, load_catalog, parse_catalog, query_vectors
from .errors import (
    BudgetExhausted,
    CombinationUnsupported,
    IncompatibleTransform,
    InputError,
    NoAcceptedSamples,
    NoRoute,
    ParseError,
    RvSpoofError,
    TargetNotFound,
    UnclassifiableFlow,
    UnknownSensor,
)
from .flows import (
    ActionFlow,
    AttackPath,
    Function,
    FunctionGraph,
    Sensor,
    assign_attack_path,
    build_reference_graph,
    classify_pattern,
    compose_two_round,
    enumerate_action_flows,
    reference_flows,
)

__all__ = [
    "ActionFlow", "AttackPath", "AttackVectorRecord", "BudgetExhausted", "Catalog", "CombinationUnsupported",
    "CoverageReport", "Function", "FunctionGraph", "IncompatibleTransform", "InputError", "NoAcceptedSamples",
    "NoRoute", "ParseError", "RvSpoofError", "Sensor", "TargetNotFound", "UnclassifiableFlow", "UnknownSensor",
    "assign_attack_path", "build_reference_graph", "classify_pattern", "compose_two_round", "coverage_report",
    "enumerate_action_flows", "load_catalog", "parse_catalog", "query_vectors", "reference_flows",
]
