"""Action-flow model of a robotic-vehicle pipeline.

Twelve robotic functions form a DAG from the perception functions (the only
ones a sensor feeds) down to the motion controller ``F``.  An *action flow* is
a sensor plus a simple path through that DAG ending at ``F``; two-round flows
chain a localization-to-controller flow with an object-detection flow through
the physical environment.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .errors import CombinationUnsupported, InputError, UnclassifiableFlow, UnknownSensor


class Function(str, enum.Enum):
    A1 = "A1"  # object detection
    A2 = "A2"  # segmentation
    A3 = "A3"  # localization / SLAM
    A4 = "A4"  # speech recognition
    A5 = "A5"  # distance detection
    B = "B"  # object tracking
    C1 = "C1"  # environment prediction
    C2 = "C2"  # goal planning
    D1 = "D1"  # path routing
    D2 = "D2"  # parking / landing planning
    E = "E"  # motion planning
    F = "F"  # motion controller

    def __str__(self):
        return self.value


FUNCTION_NAMES = {
    Function.A1: "Object detection",
    Function.A2: "Segmentation",
    Function.A3: "Localization/SLAM",
    Function.A4: "Speech recognition",
    Function.A5: "Distance detection",
    Function.B: "Object tracking",
    Function.C1: "Environment prediction",
    Function.C2: "Goal planning",
    Function.D1: "Path routing",
    Function.D2: "Parking/Landing planning",
    Function.E: "Motion planning",
    Function.F: "Motion controller",
}

_FUNCTION_RANK = {f: i for i, f in enumerate(Function)}


class Sensor(str, enum.Enum):
    GPS = "GPS"
    LIDAR = "LiDAR"
    CAMERA = "Camera"
    IMU = "IMU"
    MICROPHONE = "Microphone"
    ULTRASONIC = "Ultrasonic"
    RADAR = "MMWRadar"

    def __str__(self):
        return self.value


_SENSOR_ALIASES = {
    "gps": Sensor.GPS,
    "lidar": Sensor.LIDAR,
    "camera": Sensor.CAMERA,
    "imu": Sensor.IMU,
    "microphone": Sensor.MICROPHONE,
    "mic": Sensor.MICROPHONE,
    "ultrasonic": Sensor.ULTRASONIC,
    "radar": Sensor.RADAR,
    "mmwradar": Sensor.RADAR,
    "mmw_radar": Sensor.RADAR,
}


def parse_sensor(name: str) -> Sensor:
    """Resolve a sensor by enum value or a case-insensitive alias."""
    if isinstance(name, Sensor):
        return name
    key = str(name).strip().lower()
    if key in _SENSOR_ALIASES:
        return _SENSOR_ALIASES[key]
    raise UnknownSensor(f"unknown sensor {name!r}")


# Row order of the reference flow table: sensors are listed radar first.
TABLE_SENSOR_ORDER = (
    Sensor.RADAR,
    Sensor.LIDAR,
    Sensor.CAMERA,
    Sensor.GPS,
    Sensor.IMU,
    Sensor.MICROPHONE,
    Sensor.ULTRASONIC,
)
# First-round sensors of the two-round block, in table order.
TWO_ROUND_FIRST_ORDER = (Sensor.IMU, Sensor.CAMERA, Sensor.LIDAR, Sensor.GPS)
TWO_ROUND_SECOND_SENSORS = (Sensor.CAMERA, Sensor.LIDAR)
FIRST_ROUND_SENSORS = frozenset(TWO_ROUND_FIRST_ORDER)

BLURRING = "blurring"
ROI = "roi"
MODES = (BLURRING, ROI)


class AttackPath(str, enum.Enum):
    P1 = "AtkPath1"
    P2 = "AtkPath2"
    P3 = "AtkPath3"
    P4 = "AtkPath4"
    P5 = "AtkPath5"
    P6 = "AtkPath6"
    P7 = "AtkPath7"

    def __str__(self):
        return self.value

    @property
    def number(self) -> int:
        return int(self.value[-1])

    @property
    def rounds(self) -> int:
        return 2 if self in (AttackPath.P6, AttackPath.P7) else 1


def parse_attack_path(text) -> AttackPath:
    if isinstance(text, AttackPath):
        return text
    s = str(text).strip()
    if s.isdigit():
        s = f"AtkPath{s}"
    try:
        return AttackPath(s)
    except ValueError:
        raise InputError(f"unknown attack path {text!r}") from None


A1, A2, A3, A4, A5 = Function.A1, Function.A2, Function.A3, Function.A4, Function.A5
B, C1, C2, D1, D2, E, F = Function.B, Function.C1, Function.C2, Function.D1, Function.D2, Function.E, Function.F


@dataclass(frozen=True)
class FlowPattern:
    id: str
    signature: tuple  # function sequence; empty for the two-round pattern
    attacks: tuple

    @property
    def number(self) -> int:
        return int(self.id[2:])


PATTERNS = {
    p.id: p
    for p in (
        FlowPattern("FP1", (A1, E, F), ("Obstacle Appearing", "Obstacle Missing", "Traffic Controller Misclassification")),
        FlowPattern("FP2", (A1, B, C1, E, F), ("Trajectory Appearing", "Trajectory Missing", "Trajectory Altering")),
        FlowPattern("FP3", (A2, C1, E, F), ("Lane Altering",)),
        FlowPattern("FP4", (A3, E, F), ("Deviating Position Altering",)),
        FlowPattern("FP5", (A3, C1, E, F), ("Predicted Priority Altering",)),
        FlowPattern("FP6", (A3, D1, E, F), ("Target Deviating Position Altering", "Loop Closure Failure")),
        FlowPattern("FP7", (A3, F), ("Destabilizing Velocity Altering", "Destabilizing Position Altering")),
        FlowPattern("FP8", (A3, D2, E, F), ("Specific Location Altering",)),
        FlowPattern("FP9", (A5, D2, E, F), ("Obstacle Distance Altering",)),
        FlowPattern("FP10", (A5, F), ("Lateral Distance Altering",)),
        FlowPattern("FP11", (A4, C2, D1, E, F), ("Target Goal Generation",)),
        FlowPattern("FP12", (A4, C2, F), ("Target Goal Generation",)),
        FlowPattern("FP13", (A4, C2, D2, E, F), ("Target Goal Generation",)),
        FlowPattern("FP14", (), ("Target Blurring", "ROI Altering")),
    )
}
_SIGNATURES = {p.signature: p for p in PATTERNS.values() if p.signature}

# Row order of patterns inside each sensor block of the reference flow table.
PATTERN_ROW_ORDER = ("FP1", "FP2", "FP3", "FP5", "FP6", "FP8", "FP4", "FP7", "FP12", "FP11", "FP13", "FP9", "FP10")
_PATTERN_ROW_RANK = {p: i for i, p in enumerate(PATTERN_ROW_ORDER)}

PATTERN_PATHS = {
    "FP1": AttackPath.P4,
    "FP3": AttackPath.P4,
    "FP9": AttackPath.P4,
    "FP10": AttackPath.P4,
    "FP2": AttackPath.P5,
    "FP11": AttackPath.P5,
    "FP12": AttackPath.P5,
    "FP13": AttackPath.P5,
    "FP4": AttackPath.P3,
    "FP5": AttackPath.P3,
    "FP6": AttackPath.P3,
    "FP8": AttackPath.P2,
    "FP7": AttackPath.P1,
}


@dataclass(frozen=True)
class FunctionGraph:
    nodes: frozenset
    edges: frozenset
    sensor_bindings: Mapping[Sensor, frozenset] = field(hash=False)

    def __post_init__(self):
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise InputError(f"edge {a}->{b} references an unknown function")
        for s, entries in self.sensor_bindings.items():
            if not entries:
                raise InputError(f"sensor {s} has no entry functions")
        if not nx.is_directed_acyclic_graph(self.to_networkx()):
            raise InputError("function graph must be acyclic")

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def successors(self, fn) -> list:
        return sorted((b for a, b in self.edges if a == fn), key=_FUNCTION_RANK.get)

    def out_degree(self, fn) -> int:
        return sum(1 for a, _ in self.edges if a == fn)

    def without_edge(self, a, b) -> "FunctionGraph":
        return FunctionGraph(self.nodes, self.edges - {(Function(a), Function(b))}, self.sensor_bindings)


REFERENCE_EDGES = (
    (A1, E), (A1, B), (B, C1), (C1, E), (A2, C1), (A3, C1), (A3, D1), (A3, D2), (A3, E), (A3, F),
    (A4, C2), (C2, D1), (C2, D2), (C2, F), (A5, D2), (A5, F), (D1, E), (D2, E), (E, F),
)  # fmt: skip

REFERENCE_BINDINGS = {
    Sensor.RADAR: frozenset({A1}),
    Sensor.LIDAR: frozenset({A1, A3}),
    Sensor.CAMERA: frozenset({A1, A2, A3}),
    Sensor.GPS: frozenset({A3}),
    Sensor.IMU: frozenset({A3}),
    Sensor.MICROPHONE: frozenset({A4}),
    Sensor.ULTRASONIC: frozenset({A5}),
}


def build_reference_graph() -> FunctionGraph:
    return FunctionGraph(frozenset(Function), frozenset(REFERENCE_EDGES), dict(REFERENCE_BINDINGS))


@dataclass(frozen=True)
class ActionFlow:
    """One sensor-to-controller flow.

    For two-round flows ``sensor``/``functions`` describe the first round and
    ``second_round`` holds ``(sensor, functions)`` of the flow re-entering
    through the environment.
    """

    sensor: Sensor
    functions: tuple
    pattern: str | None = None
    attack_path: AttackPath | None = None
    id: str = ""
    second_round: tuple | None = None
    mode: str | None = None

    @property
    def rounds(self) -> int:
        return 1 if self.second_round is None else 2

    def sequence_text(self) -> str:
        text = "-".join(str(f) for f in self.functions)
        if self.second_round is not None:
            text += ">" + "-".join(str(f) for f in self.second_round[1])
        return text

    def sensor_text(self) -> str:
        if self.second_round is None:
            return str(self.sensor)
        return f"{self.sensor}>{self.second_round[0]}"

    def to_line(self) -> str:
        return (
            f"{self.id} {self.sensor_text()} {self.sequence_text()} "
            f"pattern={self.pattern or '?'} path={self.attack_path or '?'} rounds={self.rounds}"
        )


def _validate_single(flow: ActionFlow, graph: FunctionGraph | None = None):
    fns = flow.functions
    if not fns or fns[-1] != F:
        raise UnclassifiableFlow(f"flow {flow.sequence_text()} does not end at F")
    if len(set(fns)) != len(fns):
        raise UnclassifiableFlow(f"flow {flow.sequence_text()} repeats a function")
    if graph is not None:
        if fns[0] not in graph.sensor_bindings.get(flow.sensor, ()):
            raise UnclassifiableFlow(f"{fns[0]} is not an entry function of {flow.sensor}")
        for a, b in zip(fns, fns[1:]):
            if (a, b) not in graph.edges:
                raise UnclassifiableFlow(f"{a}->{b} is not a graph edge")


def classify_pattern(flow: ActionFlow) -> FlowPattern:
    """Return the flow pattern matching the flow's function composition."""
    if flow.second_round is not None:
        sensor2, fns2 = flow.second_round
        if (
            _SIGNATURES.get(tuple(flow.functions)) is PATTERNS["FP7"]
            and _SIGNATURES.get(tuple(fns2)) is PATTERNS["FP1"]
            and sensor2 in TWO_ROUND_SECOND_SENSORS
        ):
            return PATTERNS["FP14"]
        raise UnclassifiableFlow(f"two-round flow {flow.sequence_text()} matches no pattern")
    pattern = _SIGNATURES.get(tuple(flow.functions))
    if pattern is None:
        raise UnclassifiableFlow(f"flow {flow.sensor} {flow.sequence_text()} matches no pattern")
    return pattern


def assign_attack_path(flow: ActionFlow) -> AttackPath:
    pattern = flow.pattern or classify_pattern(flow).id
    if pattern == "FP14":
        return AttackPath.P7 if flow.mode == ROI else AttackPath.P6
    return PATTERN_PATHS[pattern]


def _label(flow: ActionFlow) -> ActionFlow:
    pattern = classify_pattern(flow).id
    labelled = ActionFlow(flow.sensor, flow.functions, pattern, None, flow.id, flow.second_round, flow.mode)
    return ActionFlow(flow.sensor, flow.functions, pattern, assign_attack_path(labelled), flow.id, flow.second_round, flow.mode)


def compose_two_round(first: ActionFlow, second: ActionFlow, mode: str) -> ActionFlow:
    """Chain an operation-state flow with an object-detection flow.

    Only localization-to-controller first rounds (FP7) followed by a camera or
    LiDAR object-detection round (FP1) are supported; ``roi`` additionally
    needs a camera second round.
    """
    if mode not in MODES:
        raise CombinationUnsupported(f"unknown two-round mode {mode!r}")
    if first.second_round is not None or second.second_round is not None:
        raise CombinationUnsupported("both rounds must be single-round flows")
    try:
        p1 = classify_pattern(first).id
        p2 = classify_pattern(second).id
    except UnclassifiableFlow as exc:
        raise CombinationUnsupported(str(exc)) from None
    if p1 != "FP7" or first.sensor not in FIRST_ROUND_SENSORS:
        raise CombinationUnsupported(
            f"first round {first.sensor} {first.sequence_text()} ({p1}) cannot alter the environment view"
        )
    if p2 != "FP1" or second.sensor not in TWO_ROUND_SECOND_SENSORS:
        raise CombinationUnsupported(
            f"second round {second.sensor} {second.sequence_text()} ({p2}) is not a camera/LiDAR detection flow"
        )
    if mode == ROI and second.sensor != Sensor.CAMERA:
        raise CombinationUnsupported("ROI altering needs a camera second round")
    flow = ActionFlow(first.sensor, tuple(first.functions), None, None, "", (second.sensor, tuple(second.functions)), mode)
    return _label(flow)


def _single_round_key(flow: ActionFlow):
    rank = _PATTERN_ROW_RANK.get(flow.pattern, len(PATTERN_ROW_ORDER))
    return (rank, _FUNCTION_RANK[flow.functions[0]], len(flow.functions), [_FUNCTION_RANK[f] for f in flow.functions])


def _sensor_order(graph: FunctionGraph) -> list:
    known = [s for s in TABLE_SENSOR_ORDER if s in graph.sensor_bindings]
    extra = sorted((s for s in graph.sensor_bindings if s not in TABLE_SENSOR_ORDER), key=str)
    return known + extra


def _enumerate_all(graph: FunctionGraph) -> list:
    g = graph.to_networkx()
    flows = []
    single_by_sensor = {}
    for sensor in _sensor_order(graph):
        block = []
        for entry in sorted(graph.sensor_bindings[sensor], key=_FUNCTION_RANK.get):
            if entry == F:
                paths = [[F]]
            elif F in g and nx.has_path(g, entry, F):
                paths = nx.all_simple_paths(g, entry, F)
            else:
                paths = []
            for path in paths:
                flow = ActionFlow(sensor, tuple(path))
                try:
                    flow = _label(flow)
                except UnclassifiableFlow:
                    pass
                block.append(flow)
        block.sort(key=_single_round_key)
        single_by_sensor[sensor] = block
        flows.extend(block)

    fp1 = {f.sensor: f for f in flows if f.pattern == "FP1"}
    for sensor in TWO_ROUND_FIRST_ORDER:
        first = next((f for f in single_by_sensor.get(sensor, ()) if f.pattern == "FP7"), None)
        if first is None:
            continue
        for second_sensor, mode in ((Sensor.CAMERA, BLURRING), (Sensor.LIDAR, BLURRING), (Sensor.CAMERA, ROI)):
            if second_sensor in fp1:
                flows.append(compose_two_round(first, fp1[second_sensor], mode))

    return [
        ActionFlow(f.sensor, f.functions, f.pattern, f.attack_path, f"AF{i}", f.second_round, f.mode)
        for i, f in enumerate(flows, start=1)
    ]


def enumerate_action_flows(graph: FunctionGraph, sensors: Iterable) -> list:
    """All single- and two-round action flows for ``sensors``.

    Labels ``AF<n>`` come from the enumeration of every bound sensor, so a
    flow keeps its label regardless of which subset is requested.  A two-round
    flow is included only when both of its sensors are requested.
    """
    wanted = set()
    for s in sensors:
        s = parse_sensor(s)
        if s not in graph.sensor_bindings:
            raise UnknownSensor(f"sensor {s} has no binding in this graph")
        wanted.add(s)
    if not wanted:
        return []
    out = []
    for flow in _enumerate_all(graph):
        if flow.sensor not in wanted:
            continue
        if flow.second_round is not None and flow.second_round[0] not in wanted:
            continue
        out.append(flow)
    return out


def reference_flows() -> list:
    graph = build_reference_graph()
    return enumerate_action_flows(graph, graph.sensor_bindings)


def format_flows(flows: Sequence[ActionFlow]) -> str:
    return "".join(f.to_line() + "\n" for f in flows)


def parse_flow_line(line: str) -> tuple:
    """Parse one listing line into ``(id, sensors, sequence, pattern, path, rounds)``."""
    parts = line.split()
    if len(parts) != 6:
        raise InputError(f"malformed flow line: {line!r}")
    fid, sensors, seq, pattern, path, rounds = parts
    kv = {}
    for tok in (pattern, path, rounds):
        k, _, v = tok.partition("=")
        kv[k] = v
    return fid, sensors, seq, kv["pattern"], kv["path"], int(kv["rounds"])
