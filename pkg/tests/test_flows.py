import random
from collections import Counter
from importlib import resources

import pytest

from rvspoof.errors import CombinationUnsupported, UnclassifiableFlow, UnknownSensor
from rvspoof.flows import (
    REFERENCE_BINDINGS,
    REFERENCE_EDGES,
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
    format_flows,
    parse_flow_line,
    parse_sensor,
    reference_flows,
)

from . import oracles

A1, A2, A3, A4, A5 = Function.A1, Function.A2, Function.A3, Function.A4, Function.A5
B, C1, C2, D1, D2, E, F = Function.B, Function.C1, Function.C2, Function.D1, Function.D2, Function.E, Function.F


def golden_text():
    return resources.files("rvspoof").joinpath("data/reference_flows.txt").read_text()


def flow(sensor, *fns):
    return ActionFlow(sensor, tuple(fns))


def test_reference_graph_shape():
    g = build_reference_graph()
    assert len(g.nodes) == 12
    assert len(g.edges) == 19  # includes C1 -> E, needed for the FP2/FP3/FP5 shapes
    listed = {(A1, E), (A1, B), (B, C1), (A2, C1), (A3, C1), (A3, D1), (A3, D2), (A3, E), (A3, F),
              (A4, C2), (C2, D1), (C2, D2), (C2, F), (A5, D2), (A5, F), (D1, E), (D2, E), (E, F)}  # fmt: skip
    assert set(g.edges) == listed | {(C1, E)}
    assert len(g.sensor_bindings) == 7
    assert g.out_degree(A3) == 5
    assert g.successors(A3) == [C1, D1, D2, E, F]
    assert g.out_degree(F) == 0


def test_cyclic_graph_rejected():
    with pytest.raises(Exception):
        FunctionGraph(frozenset(Function), frozenset(REFERENCE_EDGES) | {(F, A1)}, dict(REFERENCE_BINDINGS))


def test_enumeration_matches_golden_file():
    assert format_flows(reference_flows()) == golden_text()


def test_golden_file_round_trips_through_parser():
    parsed = [parse_flow_line(line) for line in golden_text().splitlines()]
    assert [p[0] for p in parsed] == [f"AF{i}" for i in range(1, 45)]
    assert sum(1 for p in parsed if p[5] == 2) == 12


def test_single_round_paths_agree_with_dfs_oracle():
    expected = oracles.flows_by_sensor(REFERENCE_EDGES, REFERENCE_BINDINGS, F)
    got = {}
    for f in reference_flows():
        if f.rounds == 1:
            got.setdefault(f.sensor, []).append(f.functions)
    assert {s: sorted(v) for s, v in got.items()} == expected


def test_per_sensor_counts():
    counts = Counter(f.sensor for f in reference_flows() if f.rounds == 1)
    assert counts == {
        Sensor.RADAR: 2, Sensor.LIDAR: 7, Sensor.CAMERA: 8, Sensor.GPS: 5,
        Sensor.IMU: 5, Sensor.MICROPHONE: 3, Sensor.ULTRASONIC: 2,
    }  # fmt: skip
    assert sum(f.rounds == 2 for f in reference_flows()) == 12


@pytest.mark.parametrize(
    "fid, sensor, seq, pattern, path",
    [
        ("AF1", "MMWRadar", "A1-E-F", "FP1", "AtkPath4"),
        ("AF8", "LiDAR", "A3-E-F", "FP4", "AtkPath3"),
        ("AF11", "Camera", "A1-B-C1-E-F", "FP2", "AtkPath5"),
        ("AF20", "GPS", "A3-D2-E-F", "FP8", "AtkPath2"),
        ("AF27", "IMU", "A3-F", "FP7", "AtkPath1"),
        ("AF28", "Microphone", "A4-C2-F", "FP12", "AtkPath5"),
        ("AF31", "Ultrasonic", "A5-D2-E-F", "FP9", "AtkPath4"),
        ("AF32", "Ultrasonic", "A5-F", "FP10", "AtkPath4"),
        ("AF33", "IMU>Camera", "A3-F>A1-E-F", "FP14", "AtkPath6"),
        ("AF44", "GPS>Camera", "A3-F>A1-E-F", "FP14", "AtkPath7"),
    ],
)
def test_table_rows(fid, sensor, seq, pattern, path):
    row = {f.id: f for f in reference_flows()}[fid]
    assert (row.sensor_text(), row.sequence_text(), row.pattern, str(row.attack_path)) == (sensor, seq, pattern, path)


def test_ultrasonic_subset_and_empty_set():
    g = build_reference_graph()
    flows = enumerate_action_flows(g, {Sensor.ULTRASONIC})
    assert [f.functions for f in flows] == [(A5, D2, E, F), (A5, F)]
    assert enumerate_action_flows(g, set()) == []


def test_subset_keeps_reference_labels():
    g = build_reference_graph()
    gps = enumerate_action_flows(g, ["gps"])
    assert [f.id for f in gps] == ["AF18", "AF19", "AF20", "AF21", "AF22"]


def test_unknown_sensor():
    with pytest.raises(UnknownSensor):
        parse_sensor("sonar")
    g = FunctionGraph(frozenset(Function), frozenset(REFERENCE_EDGES), {Sensor.GPS: frozenset({A3})})
    with pytest.raises(UnknownSensor):
        enumerate_action_flows(g, [Sensor.IMU])


@pytest.mark.parametrize(
    "f, pattern",
    [
        (flow(Sensor.RADAR, A1, E, F), "FP1"),
        (flow(Sensor.IMU, A3, F), "FP7"),
        (flow(Sensor.MICROPHONE, A4, C2, F), "FP12"),
    ],
)
def test_classify_pattern(f, pattern):
    assert classify_pattern(f).id == pattern


def test_unclassifiable_shape():
    with pytest.raises(UnclassifiableFlow):
        classify_pattern(flow(Sensor.GPS, A3, D1, D2, F))


@pytest.mark.parametrize(
    "f, path",
    [
        (flow(Sensor.CAMERA, A1, B, C1, E, F), AttackPath.P5),
        (flow(Sensor.GPS, A3, D2, E, F), AttackPath.P2),
        (flow(Sensor.LIDAR, A3, E, F), AttackPath.P3),
    ],
)
def test_assign_attack_path(f, path):
    assert assign_attack_path(f) == path


def test_compose_examples():
    imu, cam = flow(Sensor.IMU, A3, F), flow(Sensor.CAMERA, A1, E, F)
    blurred = compose_two_round(imu, cam, "blurring")
    assert (blurred.pattern, blurred.attack_path, blurred.rounds) == ("FP14", AttackPath.P6, 2)
    roi = compose_two_round(flow(Sensor.GPS, A3, F), cam, "roi")
    assert roi.attack_path == AttackPath.P7
    with pytest.raises(CombinationUnsupported):
        compose_two_round(flow(Sensor.MICROPHONE, A4, C2, F), cam, "blurring")
    with pytest.raises(CombinationUnsupported):
        compose_two_round(imu, flow(Sensor.LIDAR, A1, E, F), "roi")
    with pytest.raises(CombinationUnsupported):
        compose_two_round(imu, cam, "smear")


def test_exactly_twelve_composable_triples():
    singles = [f for f in reference_flows() if f.rounds == 1]
    ok = []
    for a in singles:
        for b in singles:
            for mode in ("blurring", "roi"):
                try:
                    compose_two_round(a, b, mode)
                except CombinationUnsupported:
                    continue
                ok.append((a.sensor, b.sensor, mode))
    assert len(ok) == 12
    assert {s for s, _, _ in ok} == {Sensor.IMU, Sensor.CAMERA, Sensor.LIDAR, Sensor.GPS}
    assert Counter((b, m) for _, b, m in ok) == {
        (Sensor.CAMERA, "blurring"): 4, (Sensor.LIDAR, "blurring"): 4, (Sensor.CAMERA, "roi"): 4,
    }  # fmt: skip


def test_attack_path_independent_of_enumeration_order():
    flows = [f for f in reference_flows()]
    labels = {f.id: f.attack_path for f in flows}
    rng = random.Random(3)
    for _ in range(5):
        rng.shuffle(flows)
        for f in flows:
            assert assign_attack_path(f) == labels[f.id]


def test_removing_e_to_f_leaves_direct_controller_shapes():
    g = build_reference_graph().without_edge("E", "F")
    flows = enumerate_action_flows(g, g.sensor_bindings)
    shapes = {f.functions for f in flows if f.rounds == 1}
    assert shapes == {(A3, F), (A4, C2, F), (A5, F)}
    assert {f.pattern for f in flows if f.rounds == 1} == {"FP7", "FP12", "FP10"}
