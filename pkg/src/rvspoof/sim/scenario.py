"""Scenario description and its TOML file format.

A scenario file looks like::

    name = "car_signal_roi"
    vehicle = "car"              # car | drone | agv
    sensors = ["GPS", "IMU", "Camera"]
    localization = "gps"         # gps | imu_integration
    dt = 0.1
    steps = 250
    start = { x = 0, y = 0, heading = 0, speed = 10 }
    destination = [100, 0]
    goals = { dock_b = [0, 30] } # names usable by voice commands
    grid = { bounds = [-10, -20, 140, 20], cell = 2 }
    params = { v_nom = 10 }      # any LoopParams field

    [[obstacles]]                # id, class, position, velocity, extent
    [[lanes]]                    # centerline, half_width
    [[signals]]                  # id, position, state, schedule, stop_line, governs
    [[no_fly_zones]]             # rect = [x0, y0, x1, y1]
    [[landmarks]]                # position, tag
    [[commands]]                 # t, text   (scripted voice commands)
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources

from .. import _toml
from ..errors import InputError, ParseError
from ..flows import Sensor, parse_sensor
from .world import EnvironmentState, Lane, Landmark, NoFlyZone, Obstacle, OperationState, Signal

VEHICLES = ("car", "drone", "agv")


@dataclass(frozen=True)
class LoopParams:
    dt: float = 0.1
    a_max: float = 6.0
    omega_max: float = 1.5
    v_nom: float = 10.0
    d_safe: float = 8.0
    horizon: float = 3.0
    r_replan: float = 2.0
    a_comfort: float = 3.0  # planned deceleration toward stop lines and caution objects
    k_speed: float = 2.0
    k_heading: float = 3.0
    k_lateral: float = 0.3
    lookahead: float = 4.0
    arrive_radius: float = 1.0
    vehicle_radius: float = 1.0
    corridor_half_width: float = 1.5
    cluster_gap: float = 1.0
    min_cluster_points: int = 2
    track_gate: float = 2.0
    cruise_altitude: float = 10.0
    descent_rate: float = 2.0
    # hazard thresholds
    destabilized_window: int = 20
    destabilized_count: int = 15
    destination_tolerance: float = 2.0


@dataclass(frozen=True)
class Scenario:
    name: str
    vehicle: str
    sensors: tuple
    start: OperationState
    destination: tuple
    environment: EnvironmentState = EnvironmentState()
    localization: str = "gps"
    steps: int = 200
    goals: dict = field(default_factory=dict)
    commands: tuple = ()  # ((t, text), ...)
    grid_bounds: tuple = (-20.0, -20.0, 120.0, 20.0)
    grid_cell: float = 2.0
    params: LoopParams = LoopParams()
    description: str = ""
    source_text: str = ""

    def __post_init__(self):
        if self.vehicle not in VEHICLES:
            raise InputError(f"vehicle must be one of {VEHICLES}")
        if self.localization not in ("gps", "imu_integration"):
            raise InputError("localization must be gps or imu_integration")
        if self.localization == "gps" and Sensor.GPS not in self.sensors:
            raise InputError("gps localization needs a GPS sensor")
        if Sensor.IMU not in self.sensors:
            raise InputError("every vehicle carries an IMU")

    @property
    def dt(self) -> float:
        return self.params.dt

    def config_hash(self) -> str:
        text = self.source_text or repr(self)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def without_commands(self) -> "Scenario":
        return replace(self, commands=())


def _xy(v, what, src):
    try:
        x, y = v
        return (float(x), float(y))
    except (TypeError, ValueError):
        raise ParseError(f"{what} must be a pair [x, y], got {v!r}", None, src) from None


def parse_scenario(text: str, source=None) -> Scenario:
    doc = _toml.loads(text, source)
    try:
        return _build(doc, text, source)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise ParseError(f"bad scenario: {exc}", None, source) from None


def _build(doc, text, source):
    params = LoopParams()
    p = dict(doc.get("params", {}))
    if "dt" in doc:
        p["dt"] = doc["dt"]
    names = {f.name for f in fields(LoopParams)}
    unknown = set(p) - names
    if unknown:
        raise ParseError(f"unknown params: {', '.join(sorted(unknown))}", None, source)
    params = replace(params, **{k: type(getattr(params, k))(v) for k, v in p.items()})

    st = doc["start"]
    vehicle = doc.get("vehicle", "car")
    alt = float(st.get("altitude", params.cruise_altitude if vehicle == "drone" else 0.0))
    start = OperationState(float(st["x"]), float(st["y"]), float(st.get("heading", 0.0)), float(st.get("speed", 0.0)), altitude=alt)

    obstacles = tuple(
        Obstacle(str(o["id"]), o.get("class", "vehicle"), _xy(o["position"], "position", source),
                 _xy(o.get("velocity", [0, 0]), "velocity", source), float(o.get("extent", 0.5)))  # fmt: skip
        for o in doc.get("obstacles", [])
    )
    lanes = tuple(
        Lane(tuple(_xy(pt, "centerline point", source) for pt in ln["centerline"]), float(ln.get("half_width", 2.0)))
        for ln in doc.get("lanes", [])
    )
    signals = []
    for s in doc.get("signals", []):
        state = s.get("state", "green")
        sched = tuple((float(t), str(v)) for t, v in s.get("schedule", []))
        for v in [state] + [v for _, v in sched]:
            if v not in ("red", "green"):
                raise ParseError(f"signal state must be red or green, got {v!r}", None, source)
        line = s.get("stop_line")
        line = None if line is None else tuple(_xy(pt, "stop_line point", source) for pt in line)
        signals.append(Signal(str(s["id"]), _xy(s["position"], "position", source), state, sched, line, bool(s.get("governs", False))))
    zones = tuple(NoFlyZone(*(float(v) for v in z["rect"])) for z in doc.get("no_fly_zones", []))
    marks = tuple(Landmark(_xy(m["position"], "position", source), str(m.get("tag", ""))) for m in doc.get("landmarks", []))
    env = EnvironmentState(obstacles, lanes, tuple(signals), zones, marks)

    grid = doc.get("grid", {})
    goals = {str(k): _xy(v, f"goal {k}", source) for k, v in doc.get("goals", {}).items()}
    commands = tuple(sorted((float(c["t"]), str(c["text"])) for c in doc.get("commands", [])))
    return Scenario(
        name=str(doc.get("name", "scenario")),
        vehicle=vehicle,
        sensors=tuple(parse_sensor(s) for s in doc.get("sensors", ["GPS", "IMU"])),
        start=start,
        destination=_xy(doc["destination"], "destination", source),
        environment=env,
        localization=doc.get("localization", "gps"),
        steps=int(doc.get("steps", 200)),
        goals=goals,
        commands=commands,
        grid_bounds=tuple(float(v) for v in grid.get("bounds", (-20.0, -20.0, 120.0, 20.0))),
        grid_cell=float(grid.get("cell", 2.0)),
        params=params,
        description=str(doc.get("description", "")),
        source_text=text,
    )


def load_scenario(path) -> Scenario:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, path)


def shipped_scenarios() -> list:
    """Names of the scenarios bundled with the package."""
    root = resources.files("rvspoof").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def shipped_path(name: str, suffix: str = ".toml"):
    return resources.files("rvspoof").joinpath(f"data/scenarios/{name}{suffix}")


def load_shipped(name: str):
    """(Scenario, spoof specs) for a bundled scenario."""
    from .world import parse_spoofs

    scen_file = shipped_path(name)
    if not scen_file.is_file():
        raise InputError(f"no shipped scenario named {name!r}")
    scenario = parse_scenario(scen_file.read_text(encoding="utf-8"), f"{name}.toml")
    spoof_file = shipped_path(name, ".spoofs")
    specs = parse_spoofs(spoof_file.read_text(encoding="utf-8"), f"{name}.spoofs") if spoof_file.is_file() else []
    return scenario, specs
