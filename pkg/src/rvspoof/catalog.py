"""Attack-vector catalog: spoofer taxonomy plus the pattern x technique matrix.

A record is one (flow-pattern attack, sensor technique) cell.  Known cells
carry reference keys, unexplored ones a feasibility class:

* ``C1`` transferable from a sibling technique,
* ``C2`` easy to prove from existing results,
* ``C3`` needs new validation.
"""
from __future__ import annotations

import enum
import io
import os
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable

from .errors import DuplicateVector, ParseError, UnknownFlowReference
from .flows import PATTERNS, AttackPath, Sensor, parse_attack_path, parse_sensor, reference_flows

TECHNIQUES = {
    Sensor.LIDAR: ("laser_projection", "shape_manipulation", "object_placement"),
    Sensor.CAMERA: ("sticker_pasting", "light_projection"),
    Sensor.GPS: ("signal_spoofing",),
    Sensor.IMU: ("acoustic_injection",),
    Sensor.MICROPHONE: ("inaudible_voice+audio_injection",),
    Sensor.ULTRASONIC: ("signal_injection",),
    Sensor.RADAR: ("signal_injection",),
}

COST_TIERS = ("$", "$$", "$$$")  # < $100, $100-$1000, > $1000
SIZE_CLASSES = ("S1", "S2")  # portable (smaller than a mug), non-portable
SIGNALS = ("satellite", "light", "sticker2d", "object3d", "sound", "rf")
RANGE_CLASSES = ("R1", "R2")  # < 5 m, >= 5 m
EXPOSURES = ("active", "passive")
GOAL_STATES = ("position", "object", "lane", "velocity", "mission_goal")
RV_TYPES = ("car", "drone", "agv")
SCENARIOS = ("indoor", "outdoor")


class Status(str, enum.Enum):
    KNOWN = "known"
    UNEXPLORED = "unexplored"

    def __str__(self):
        return self.value


class Feasibility(str, enum.Enum):
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SpooferProfile:
    cost: str
    size: str
    signal: str
    recognizable: bool


@dataclass(frozen=True)
class OperationProfile:
    range_class: str
    exposure: str


@dataclass(frozen=True)
class VictimProfile:
    rv_types: frozenset
    scenarios: frozenset


@dataclass(frozen=True)
class AttackVectorRecord:
    patterns: tuple  # usually one FP id; the shared microphone cell spans FP11-FP13
    attack: str
    sensor: Sensor
    technique: str
    status: Status
    feasibility: Feasibility | None
    references: tuple
    goal_state: str
    attack_path: AttackPath
    spoofer: SpooferProfile
    operation: OperationProfile
    victim: VictimProfile
    flows: tuple = ()

    @property
    def pattern(self) -> str:
        return ",".join(self.patterns)

    @property
    def key(self) -> tuple:
        return (self.pattern, self.attack, self.sensor, self.technique)

    def to_line(self) -> str:
        status_field = ",".join(self.references) if self.status is Status.KNOWN else str(self.feasibility)
        return "|".join(
            [
                self.pattern,
                self.attack,
                str(self.sensor),
                self.technique,
                str(self.status),
                status_field,
                self.goal_state,
                str(self.attack_path),
                self.spoofer.cost,
                self.spoofer.size,
                self.spoofer.signal,
                "yes" if self.spoofer.recognizable else "no",
                self.operation.range_class,
                self.operation.exposure,
                ",".join(t for t in RV_TYPES if t in self.victim.rv_types),
                ",".join(s for s in SCENARIOS if s in self.victim.scenarios),
                ",".join(self.flows),
            ]
        )


@dataclass(frozen=True)
class Catalog:
    records: tuple = ()

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def flow_join(self) -> dict:
        return {r.key: frozenset(r.flows) for r in self.records}


def _choice(value, allowed, what, lineno, source):
    if value not in allowed:
        raise ParseError(f"bad {what} {value!r} (expected one of {', '.join(allowed)})", lineno, source)
    return value


def _split_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _parse_record(line: str, lineno: int, source, flow_ids) -> AttackVectorRecord:
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != 17:
        raise ParseError(f"expected 17 '|'-separated fields, got {len(parts)}", lineno, source)
    (pattern, attack, sensor, technique, status, cls_refs, goal, path,
     cost, size, signal, recog, rng, exposure, rv_types, scenarios, flows) = parts  # fmt: skip

    patterns = _split_list(pattern)
    if not patterns or any(p not in PATTERNS for p in patterns):
        raise ParseError(f"bad pattern {pattern!r}", lineno, source)
    if not attack:
        raise ParseError("empty attack name", lineno, source)
    try:
        sensor_kind = parse_sensor(sensor)
    except Exception:
        raise ParseError(f"unknown sensor {sensor!r}", lineno, source) from None
    _choice(technique, TECHNIQUES[sensor_kind], f"technique for {sensor_kind}", lineno, source)

    try:
        status_v = Status(status)
    except ValueError:
        raise ParseError(f"bad status {status!r}", lineno, source) from None
    feasibility, references = None, ()
    if status_v is Status.KNOWN:
        references = _split_list(cls_refs)
        if not references:
            raise ParseError("known vector without reference keys", lineno, source)
    else:
        try:
            feasibility = Feasibility(cls_refs)
        except ValueError:
            raise ParseError(f"unexplored vector needs exactly one class C1|C2|C3, got {cls_refs!r}", lineno, source) from None

    _choice(goal, GOAL_STATES, "goal state", lineno, source)
    try:
        path_v = parse_attack_path(path)
    except Exception:
        raise ParseError(f"bad attack path {path!r}", lineno, source) from None
    _choice(cost, COST_TIERS, "cost tier", lineno, source)
    _choice(size, SIZE_CLASSES, "size class", lineno, source)
    _choice(signal, SIGNALS, "signal", lineno, source)
    _choice(recog, ("yes", "no"), "recognizable flag", lineno, source)
    _choice(rng, RANGE_CLASSES, "range class", lineno, source)
    _choice(exposure, EXPOSURES, "exposure", lineno, source)
    types = _split_list(rv_types)
    scen = _split_list(scenarios)
    if not types or not scen:
        raise ParseError("victim RV types and scenarios must be non-empty", lineno, source)
    for t in types:
        _choice(t, RV_TYPES, "RV type", lineno, source)
    for s in scen:
        _choice(s, SCENARIOS, "scenario", lineno, source)

    flow_refs = _split_list(flows)
    if not flow_refs:
        raise UnknownFlowReference("record joins to no action flow", lineno, source)
    for ref in flow_refs:
        if ref not in flow_ids:
            raise UnknownFlowReference(f"unknown action flow {ref!r}", lineno, source)

    return AttackVectorRecord(
        patterns=patterns,
        attack=attack,
        sensor=sensor_kind,
        technique=technique,
        status=status_v,
        feasibility=feasibility,
        references=references,
        goal_state=goal,
        attack_path=path_v,
        spoofer=SpooferProfile(cost, size, signal, recog == "yes"),
        operation=OperationProfile(rng, exposure),
        victim=VictimProfile(frozenset(types), frozenset(scen)),
        flows=flow_refs,
    )


def parse_catalog(text: str, source=None) -> Catalog:
    flow_ids = {f.id for f in reference_flows()}
    records, seen = [], {}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rec = _parse_record(line, lineno, source, flow_ids)
        if rec.key in seen:
            raise DuplicateVector(f"duplicate vector {rec.key} (first on line {seen[rec.key]})", lineno, source)
        seen[rec.key] = lineno
        records.append(rec)
    return Catalog(tuple(records))


def load_catalog(source=None) -> Catalog:
    """Load a catalog file; ``None`` loads the shipped reference catalog."""
    if source is None:
        text = resources.files("rvspoof").joinpath("data/catalog_reference.txt").read_text(encoding="utf-8")
        return parse_catalog(text, "catalog_reference.txt")
    if hasattr(source, "read"):
        return parse_catalog(source.read(), getattr(source, "name", None))
    with open(os.fspath(source), encoding="utf-8") as fh:
        return parse_catalog(fh.read(), os.fspath(source))


def format_catalog(catalog: Catalog) -> str:
    return "".join(r.to_line() + "\n" for r in catalog.records)


_CLAUSES = {
    "pattern": lambda r, v: v in r.patterns or v == r.pattern,
    "attack": lambda r, v: r.attack == v,
    "sensor": lambda r, v: r.sensor == parse_sensor(v),
    "technique": lambda r, v: r.technique == v,
    "status": lambda r, v: r.status == Status(v),
    "feasibility": lambda r, v: r.feasibility == Feasibility(v),
    "goal_state": lambda r, v: r.goal_state == v,
    "attack_path": lambda r, v: r.attack_path == parse_attack_path(v),
    "rv_type": lambda r, v: v in r.victim.rv_types,
    "flow": lambda r, v: v in r.flows,
}


def query_vectors(catalog: Catalog, predicate: Callable | None = None, **clauses) -> list:
    """Records matching every clause (and ``predicate`` if given), in catalog order.

    Clause names: pattern, attack, sensor, technique, status, feasibility,
    goal_state, attack_path, rv_type, flow.
    """
    unknown = set(clauses) - set(_CLAUSES)
    if unknown:
        raise ValueError(f"unknown filter clause(s): {', '.join(sorted(unknown))}")
    out = []
    for r in catalog.records:
        if predicate is not None and not predicate(r):
            continue
        if all(_CLAUSES[k](r, v) for k, v in clauses.items()):
            out.append(r)
    return out


@dataclass(frozen=True)
class CoverageReport:
    total: int
    known: int
    unexplored: int
    by_class: dict = field(default_factory=dict)
    by_pattern: dict = field(default_factory=dict)  # pattern -> (total, known, unexplored)
    by_sensor: dict = field(default_factory=dict)

    def summary_line(self) -> str:
        return f"total={self.total} known={self.known} unexplored={self.unexplored}"

    def as_report(self) -> str:
        lines = [self.summary_line()]
        lines += [f"class.{c}={self.by_class.get(str(c), 0)}" for c in Feasibility]
        for p, (t, k, u) in self.by_pattern.items():
            lines.append(f"pattern.{p} total={t} known={k} unexplored={u}")
        for s, (t, k, u) in self.by_sensor.items():
            lines.append(f"sensor.{s} total={t} known={k} unexplored={u}")
        return "\n".join(lines) + "\n"

    def as_table(self) -> str:
        lines = [self.summary_line(), "  ".join(f"{c}={self.by_class.get(str(c), 0)}" for c in Feasibility), ""]
        lines.append(f"{'group':<18}{'total':>6}{'known':>7}{'unexpl':>8}")
        for p, (t, k, u) in self.by_pattern.items():
            lines.append(f"{p:<18}{t:>6}{k:>7}{u:>8}")
        lines.append("")
        for s, (t, k, u) in self.by_sensor.items():
            lines.append(f"{s:<18}{t:>6}{k:>7}{u:>8}")
        return "\n".join(lines) + "\n"


def _tally(records: Iterable, key) -> dict:
    out = {}
    for r in records:
        t, k, u = out.get(key(r), (0, 0, 0))
        known = r.status is Status.KNOWN
        out[key(r)] = (t + 1, k + known, u + (not known))
    return out


def coverage_report(catalog) -> CoverageReport:
    records = list(catalog.records if isinstance(catalog, Catalog) else catalog)
    known = sum(r.status is Status.KNOWN for r in records)
    classes = Counter(str(r.feasibility) for r in records if r.feasibility is not None)
    by_pattern = _tally(records, lambda r: r.pattern)
    by_pattern = dict(sorted(by_pattern.items(), key=lambda kv: PATTERNS[kv[0].split(",")[0]].number))
    order = {s: i for i, s in enumerate(Sensor)}
    by_sensor = _tally(records, lambda r: str(r.sensor))
    by_sensor = dict(sorted(by_sensor.items(), key=lambda kv: order[Sensor(kv[0])]))
    return CoverageReport(
        total=len(records),
        known=known,
        unexplored=len(records) - known,
        by_class={c: classes.get(c, 0) for c in ("C1", "C2", "C3")},
        by_pattern=by_pattern,
        by_sensor=by_sensor,
    )
