"""The perception -> planning -> control loop and the trace it leaves behind."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import networkx as nx
import numpy as np

from ..errors import NoRoute
from ..flows import Sensor
from .scenario import LoopParams, Scenario
from .world import (
    OperationState,
    SystemState,
    apply_spoofs,
    is_blurred,
    render_frames,
    to_world,
    wrap,
)

PRIORITIES = ("ignore", "normal", "caution")
DEFAULT_EXTENT = {"pedestrian": 0.3, "vehicle": 1.0, "drone": 0.3, "wall": 0.5}


# estimated state and policies


@dataclass(frozen=True)
class DetectedObject:
    cls: str
    position: tuple
    extent: float
    confidence: float
    source: str  # lidar | camera | fused | radar | ultrasonic


@dataclass(frozen=True)
class Track:
    id: int
    cls: str
    position: tuple
    velocity: tuple
    extent: float
    prediction: tuple  # positions over the horizon


@dataclass(frozen=True)
class SignalReading:
    signal_id: str  # governing map signal
    state: str  # red | green | unknown
    stop_distance: float
    seen_id: str | None = None  # camera signal actually read (evaluation only)


@dataclass(frozen=True)
class EstimatedState:
    x: float
    y: float
    heading: float
    speed: float
    angular_rate: float = 0.0
    detected_objects: tuple = ()
    tracks: tuple = ()
    priorities: dict = field(default_factory=dict)  # track id -> ignore | normal | caution
    lane_offset: float | None = None
    lane_heading: float | None = None
    mission_goal: tuple | None = None
    signal: SignalReading | None = None
    next_track_id: int = 0
    initialized: bool = False

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def from_truth(cls, op: OperationState) -> "EstimatedState":
        return cls(op.x, op.y, op.heading, op.speed)

    def caution_tracks(self) -> list:
        return [t for t in self.tracks if self.priorities.get(t.id) == "caution"]


@dataclass(frozen=True)
class LongTermPolicy:
    route: tuple
    destination: tuple
    arrived: bool = False


@dataclass(frozen=True)
class InstantPolicy:
    target_speed: float
    steer_rate: float
    discrete: str | None = None  # hard_brake | land | park


@dataclass(frozen=True)
class ControlOutput:
    accel: float
    yaw_rate: float
    discrete: str | None = None


# the vehicle's prior map


class OccupancyGrid:
    """8-connected grid over the scenario bounds; static obstacles and no-fly zones are blocked."""

    def __init__(self, bounds, cell, blocked_fn):
        self.x0, self.y0, self.x1, self.y1 = bounds
        self.cell = cell
        self.nx = int(math.floor((self.x1 - self.x0) / cell)) + 1
        self.ny = int(math.floor((self.y1 - self.y0) / cell)) + 1
        g = nx.Graph()
        free = {(i, j) for i in range(self.nx) for j in range(self.ny) if not blocked_fn(*self.center((i, j)))}
        g.add_nodes_from(free)
        for i, j in free:
            for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
                nb = (i + di, j + dj)
                if nb in free:
                    g.add_edge((i, j), nb, weight=math.hypot(di, dj))
        self.graph = g

    def center(self, c) -> tuple:
        return (self.x0 + c[0] * self.cell, self.y0 + c[1] * self.cell)

    def cell_of(self, p) -> tuple:
        i = int(round((p[0] - self.x0) / self.cell))
        j = int(round((p[1] - self.y0) / self.cell))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1))

    def _nearest_free(self, c):
        if c in self.graph:
            return c
        if not len(self.graph):
            return None
        return min(self.graph.nodes, key=lambda n: (n[0] - c[0]) ** 2 + (n[1] - c[1]) ** 2)

    def route(self, start, goal) -> tuple:
        a, b = self._nearest_free(self.cell_of(start)), self._nearest_free(self.cell_of(goal))
        if a is None or b is None:
            raise NoRoute("occupancy grid has no free cells")

        def h(u, v):
            return math.hypot(u[0] - v[0], u[1] - v[1])

        try:
            cells = nx.astar_path(self.graph, a, b, heuristic=h, weight="weight")
        except nx.NetworkXNoPath:
            raise NoRoute(f"no route from {tuple(np.round(start, 2))} to {tuple(goal)}") from None
        pts = [tuple(map(float, start))] + [self.center(c) for c in cells[1:-1]] + [tuple(map(float, goal))]
        return tuple(pts)


@dataclass
class RvMap:
    lanes: tuple
    signals: tuple
    no_fly_zones: tuple
    goals: dict
    grid: OccupancyGrid
    vehicle: str

    @classmethod
    def from_scenario(cls, sc: Scenario) -> "RvMap":
        env = sc.environment
        inflate = sc.params.vehicle_radius
        static = [o for o in env.obstacles if o.velocity == (0.0, 0.0)]

        def blocked(x, y):
            if sc.vehicle == "drone" and env.in_no_fly_zone(x, y):
                return True
            return any(math.hypot(x - o.position[0], y - o.position[1]) < o.extent + inflate for o in static)

        grid = OccupancyGrid(sc.grid_bounds, sc.grid_cell, blocked)
        return cls(env.lanes, env.signals, env.no_fly_zones, dict(sc.goals), grid, sc.vehicle)

    def in_no_fly_zone(self, x, y) -> bool:
        return any(z.contains(x, y) for z in self.no_fly_zones)


# perception


def _cluster_lidar(points: np.ndarray, gap: float, min_points: int) -> list:
    """1D gap clustering over the sweep order; returns vehicle-frame point groups."""
    if len(points) == 0:
        return []
    order = np.argsort(np.arctan2(points[:, 1], points[:, 0]), kind="stable")
    pts = points[order]
    groups, cur = [], [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - cur[-1])) > gap:
            groups.append(cur)
            cur = [p]
        else:
            cur.append(p)
    groups.append(cur)
    if len(groups) > 1 and np.hypot(*(groups[0][0] - groups[-1][-1])) <= gap:
        groups[0] = groups.pop() + groups[0]
    return [np.array(g) for g in groups if len(g) >= min_points]


def _detect(frames, est_pose, p: LoopParams) -> list:
    x, y, h = est_pose
    objs = []
    lidar = frames.get(Sensor.LIDAR)
    if lidar is not None:
        for g in _cluster_lidar(np.asarray(lidar.points).reshape(-1, 2), p.cluster_gap, p.min_cluster_points):
            c = g.mean(axis=0)
            ext = float(max(0.2, np.max(np.hypot(*(g - c).T))))
            objs.append(DetectedObject("obstacle", tuple(to_world(x, y, h, c)), ext, min(1.0, len(g) / 5), "lidar"))
    cam = frames.get(Sensor.CAMERA)
    if cam is not None:
        for o in cam.objects:
            v = (o.distance * math.cos(o.bearing), o.distance * math.sin(o.bearing))
            pos = to_world(x, y, h, v)
            near = [i for i, d in enumerate(objs) if d.source == "lidar" and np.hypot(*(np.asarray(d.position) - pos)) < 1.5]
            if near:
                i = near[0]
                objs[i] = replace(objs[i], cls=o.cls, confidence=max(objs[i].confidence, 0.9), source="fused")
            else:
                objs.append(DetectedObject(o.cls, tuple(pos), DEFAULT_EXTENT.get(o.cls, 0.5), 0.9, "camera"))
    radar = frames.get(Sensor.RADAR)
    if radar is not None:
        for tgt in radar.targets:
            pos = to_world(x, y, h, (tgt.distance, 0.0))
            if not any(np.hypot(*(np.asarray(d.position) - pos)) < 2.0 for d in objs):
                objs.append(DetectedObject("obstacle", tuple(pos), 0.5, 0.7, "radar"))
    us = frames.get(Sensor.ULTRASONIC)
    if us is not None and us.distance is not None:
        pos = to_world(x, y, h, (us.distance + 0.2, 0.0))
        if not any(np.hypot(*(np.asarray(d.position) - pos)) < 1.0 for d in objs):
            objs.append(DetectedObject("obstacle", tuple(pos), 0.2, 0.6, "ultrasonic"))
    return objs


def _track(objs, prev: EstimatedState, p: LoopParams):
    tracks, used = [], set()
    next_id = prev.next_track_id
    steps = np.arange(0.0, p.horizon + 1e-9, 0.25)
    for o in objs:
        pos = np.asarray(o.position)
        best, best_d = None, p.track_gate
        for t in prev.tracks:
            d = float(np.hypot(*(pos - np.asarray(t.position))))
            if t.id not in used and d < best_d:
                best, best_d = t, d
        if best is None:
            tid, vel = next_id, np.zeros(2)
            next_id += 1
        else:
            used.add(best.id)
            tid = best.id
            vel = 0.5 * np.asarray(best.velocity) + 0.5 * (pos - np.asarray(best.position)) / p.dt
        pred = tuple(tuple(np.round(pos + vel * s, 6)) for s in steps)
        tracks.append(Track(tid, o.cls, tuple(pos), tuple(vel), o.extent, pred))
    return tuple(tracks), next_id


def _priority(track: Track, x, y, h, speed, p: LoopParams) -> str:
    length = max(p.d_safe, speed * p.horizon) + p.d_safe
    hw = p.corridor_half_width + track.extent
    c, s = math.cos(h), math.sin(h)
    verdict = "ignore"
    for px, py in track.prediction:
        dx, dy = px - x, py - y
        lon, lat = c * dx + s * dy, -s * dx + c * dy
        if 0.0 <= lon <= length:
            if abs(lat) <= hw:
                return "caution"
            if abs(lat) <= 2 * hw:
                verdict = "normal"
    return verdict


def _read_signal(cam, rv_map: RvMap | None, x, y, h):
    if rv_map is None:
        return None
    c, s = math.cos(h), math.sin(h)
    best = None
    for sig in rv_map.signals:
        if not sig.governs or sig.stop_line is None:
            continue
        mid = np.mean(np.asarray(sig.stop_line, float), axis=0)
        lon = float(c * (mid[0] - x) + s * (mid[1] - y))
        if lon < -0.5:
            continue  # already past this stop line
        if best is None or lon < best[1]:
            best = (sig, lon)
    if best is None:
        return None
    sig, stop_d = best
    dx, dy = sig.position[0] - x, sig.position[1] - y
    dist = math.hypot(dx, dy)
    if dist > 50.0:
        return None  # too far to expect a readable view
    # region of interest: the view bearing where the map says this signal should be
    expected = wrap(math.atan2(dy, dx) - h)
    views = [] if cam is None else list(cam.signals)
    if not views:
        return SignalReading(sig.id, "unknown", stop_d)
    v = min(views, key=lambda v: abs(wrap(v.bearing - expected)))
    if abs(wrap(v.bearing - expected)) > 0.15:
        return SignalReading(sig.id, "unknown", stop_d)
    return SignalReading(sig.id, v.state, stop_d, v.id)


def _mission(mic, goals, prev_goal):
    if mic is None or not mic.commands:
        return prev_goal
    words = mic.commands[-1].split()
    if len(words) == 2 and words[0] == "goto" and words[1] in goals:
        return tuple(goals[words[1]])
    return prev_goal


def perceive(frames, mode: str, prev: EstimatedState, rv_map: RvMap | None = None, params: LoopParams = LoopParams()) -> EstimatedState:
    """Estimate the system state from (possibly spoofed) frames."""
    p = params
    imu = frames.get(Sensor.IMU)
    gyro = imu.angular_rate if imu is not None else 0.0
    if prev.initialized:
        acc = imu.accel if imu is not None else 0.0
        heading = wrap(prev.heading + gyro * p.dt)
        speed = max(0.0, prev.speed + acc * p.dt)
        x = prev.x + speed * math.cos(heading) * p.dt
        y = prev.y + speed * math.sin(heading) * p.dt
    else:
        heading, speed, x, y = prev.heading, prev.speed, prev.x, prev.y
    gps = frames.get(Sensor.GPS)
    if mode == "gps" and gps is not None:
        x, y = float(gps.position[0]), float(gps.position[1])

    objs = _detect(frames, (x, y, heading), p)
    tracks, next_id = _track(objs, prev, p)
    priorities = {t.id: _priority(t, x, y, heading, speed, p) for t in tracks}
    cam = frames.get(Sensor.CAMERA)
    lane_off = cam.lane_offset if cam is not None else None
    lane_head = cam.lane_heading if cam is not None else None
    goals = rv_map.goals if rv_map is not None else {}
    return EstimatedState(
        x=x,
        y=y,
        heading=heading,
        speed=speed,
        angular_rate=gyro,
        detected_objects=tuple(objs),
        tracks=tracks,
        priorities=priorities,
        lane_offset=lane_off,
        lane_heading=lane_head,
        mission_goal=_mission(frames.get(Sensor.MICROPHONE), goals, prev.mission_goal),
        signal=_read_signal(cam, rv_map, x, y, heading),
        next_track_id=next_id,
        initialized=True,
    )


# planning


def _polyline_distance(p, route) -> tuple:
    """(distance to the route, index of the closest segment, fraction along it)."""
    best = (math.inf, 0, 0.0)
    p = np.asarray(p)
    for i, (a, b) in enumerate(zip(route, route[1:])):
        a, b = np.asarray(a), np.asarray(b)
        d = b - a
        L2 = float(d @ d)
        u = 0.0 if L2 == 0 else float(np.clip((p - a) @ d / L2, 0, 1))
        dist = float(np.hypot(*(p - (a + u * d))))
        if dist < best[0]:
            best = (dist, i, u)
    if len(route) == 1:
        best = (float(np.hypot(*(p - np.asarray(route[0])))), 0, 0.0)
    return best


def _lookahead_point(p, route, dist):
    _, i, u = _polyline_distance(p, route)
    a, b = np.asarray(route[i]), np.asarray(route[min(i + 1, len(route) - 1)])
    cur = a + u * (b - a)
    remaining = dist
    for j in range(i + 1, len(route)):
        nxt = np.asarray(route[j])
        seg = float(np.hypot(*(nxt - cur)))
        if seg >= remaining:
            return cur + (nxt - cur) * (remaining / seg)
        remaining -= seg
        cur = nxt
    return np.asarray(route[-1])


def plan(est: EstimatedState, long_term: LongTermPolicy, rv_map: RvMap, params: LoopParams = LoopParams()):
    """Returns (LongTermPolicy, InstantPolicy)."""
    p = params
    if rv_map.in_no_fly_zone(est.x, est.y):
        return long_term, InstantPolicy(0.0, 0.0, "land")

    dest = tuple(est.mission_goal) if est.mission_goal is not None else long_term.destination
    route = long_term.route
    if dest != long_term.destination or not route:
        route = rv_map.grid.route(est.position, dest)
    elif _polyline_distance(est.position, route)[0] > p.r_replan:
        route = rv_map.grid.route(est.position, dest)
    arrived = long_term.arrived or math.hypot(est.x - dest[0], est.y - dest[1]) <= p.arrive_radius
    lt = LongTermPolicy(tuple(route), dest, arrived)
    if arrived:
        return lt, InstantPolicy(0.0, 0.0, "park")

    # steering: lane keeping when a lane is visible, otherwise pure pursuit on the route
    if rv_map.lanes and est.lane_offset is not None:
        steer = p.k_heading * (est.lane_heading - math.atan(p.k_lateral * est.lane_offset))
    elif rv_map.lanes and rv_map.vehicle == "car":
        best = min((ln.project((est.x, est.y)) for ln in rv_map.lanes), key=lambda r: abs(r[0]))
        desired = best[1] - math.atan(p.k_lateral * best[0])
        steer = p.k_heading * wrap(desired - est.heading)
    else:
        target = _lookahead_point(est.position, route, p.lookahead)
        desired = math.atan2(target[1] - est.y, target[0] - est.x)
        steer = p.k_heading * wrap(desired - est.heading)
    steer = float(np.clip(steer, -p.omega_max, p.omega_max))

    speed = p.v_nom
    remaining = math.hypot(est.x - dest[0], est.y - dest[1])
    speed = min(speed, math.sqrt(2 * p.a_comfort * max(0.0, remaining - p.arrive_radius * 0.5)) + 0.5)
    discrete = None
    for t in est.caution_tracks():
        d = math.hypot(t.position[0] - est.x, t.position[1] - est.y) - t.extent
        if d < p.d_safe:
            discrete = "hard_brake"
        speed = min(speed, math.sqrt(2 * p.a_comfort * max(0.0, d - p.d_safe - 2.0)))
    sig = est.signal
    if sig is not None and sig.state != "green" and sig.stop_distance > -0.5:
        speed = min(speed, math.sqrt(2 * p.a_comfort * max(0.0, sig.stop_distance - 1.5)))
    if discrete == "hard_brake":
        speed = 0.0
    return lt, InstantPolicy(float(speed), steer, discrete)


# control


def control(policy: InstantPolicy, est: EstimatedState, params: LoopParams = LoopParams(), prev: ControlOutput | None = None) -> ControlOutput:
    """Proportional speed tracking plus a yaw-rate loop closed on the measured gyro rate."""
    p = params
    if policy.discrete in ("hard_brake", "land"):
        return ControlOutput(-p.a_max, 0.0, policy.discrete)
    accel = float(np.clip(p.k_speed * (policy.target_speed - est.speed), -p.a_max, p.a_max))
    if policy.discrete == "park":
        return ControlOutput(accel, 0.0, "park")
    # the rate loop pushes the measured yaw rate toward the commanded one
    yaw = policy.steer_rate + 0.5 * (policy.steer_rate - est.angular_rate)
    return ControlOutput(accel, float(np.clip(yaw, -p.omega_max, p.omega_max)), None)


def integrate(op: OperationState, u: ControlOutput, params: LoopParams, vehicle: str) -> OperationState:
    p = params
    v = max(0.0, op.speed + u.accel * p.dt)
    accel = (v - op.speed) / p.dt
    omega = float(np.clip(u.yaw_rate, -p.omega_max, p.omega_max))
    h = wrap(op.heading + omega * p.dt)
    alt = op.altitude
    if vehicle == "drone" and u.discrete == "land":
        alt = max(0.0, alt - p.descent_rate * p.dt)
    return OperationState(op.x + v * math.cos(h) * p.dt, op.y + v * math.sin(h) * p.dt, h, v, omega, accel, alt)


# the loop


@dataclass(frozen=True)
class StepRecord:
    index: int
    t: float
    truth: OperationState
    obstacles: tuple  # ((id, x, y), ...) true positions
    est: EstimatedState
    policy: InstantPolicy
    control: ControlOutput
    spoofs: tuple  # kinds active this step
    blurred: bool
    signal_seen: str | None
    signal_governing: str | None
    arrived: bool
    mission_goal: tuple | None


@dataclass
class Trace:
    scenario: Scenario
    seed: int
    steps: list
    spoof_lines: tuple = ()

    def header(self) -> str:
        h = hashlib.sha256((self.scenario.config_hash() + "|" + "|".join(self.spoof_lines) + f"|{self.seed}").encode())
        return f"# trace scenario={self.scenario.name} config={h.hexdigest()[:16]} seed={self.seed} dt={self.scenario.dt:g} steps={len(self.steps)}"

    def lines(self) -> list:
        return [self.header()] + [format_step(s) for s in self.steps]

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def truth_environment(self) -> list:
        return [s.obstacles for s in self.steps]


def format_step(s: StepRecord) -> str:
    tr, e, pol, u = s.truth, s.est, s.policy, s.control
    flags = [f for f, on in (("blur", s.blurred), ("roi", s.signal_seen is not None and s.signal_seen != s.signal_governing), ("arrived", s.arrived)) if on]
    return (
        f"t={s.t:.2f} truth={tr.x:.3f},{tr.y:.3f},{tr.heading:.4f},{tr.speed:.3f},{tr.altitude:.2f} "
        f"est={e.x:.3f},{e.y:.3f},{e.heading:.4f},{e.speed:.3f} det={len(e.detected_objects)} caution={len(e.caution_tracks())} "
        f"policy={pol.target_speed:.3f}/{pol.steer_rate:.4f}/{pol.discrete or '-'} "
        f"control={u.accel:.3f},{u.yaw_rate:.4f},{u.discrete or '-'} "
        f"spoofs={'+'.join(s.spoofs) or '-'} flags={','.join(flags) or '-'}"
    )


def run_loop(scenario: Scenario, spoofs: Sequence = (), seed: int = 0) -> Trace:
    """Fixed-step truth -> render -> spoof -> perceive -> plan -> control -> integrate."""
    p = scenario.params
    rv_map = RvMap.from_scenario(scenario)
    op = scenario.start
    est = EstimatedState.from_truth(op)
    lt = LongTermPolicy((), tuple(scenario.destination))
    governing = next((s.id for s in scenario.environment.signals if s.governs), None)
    steps = []
    for k in range(scenario.steps):
        t = round(k * p.dt, 9)
        truth = SystemState(op, scenario.environment, t)
        frames = render_frames(truth, scenario.sensors, seed, scenario.commands)
        active = tuple(s.kind for s in spoofs if s.active(t))
        frames = apply_spoofs(frames, spoofs, t)
        est = perceive(frames, scenario.localization, est, rv_map, p)
        lt, pol = plan(est, lt, rv_map, p)
        u = control(pol, est, p)
        env_t = scenario.environment.at(t)
        steps.append(
            StepRecord(
                k, t, op, tuple((o.id, round(o.position[0], 6), round(o.position[1], 6)) for o in env_t.obstacles),
                est, pol, u, active, is_blurred(op),
                est.signal.seen_id if est.signal else None,
                governing if est.signal else None,
                lt.arrived, est.mission_goal,
            )
        )  # fmt: skip
        op = integrate(op, u, p, scenario.vehicle)
    from .world import format_spoof

    return Trace(scenario, seed, steps, tuple(format_spoof(s) for s in spoofs))
