"""Ground-truth world, per-sensor rendering and spoofing transforms.

The world is planar (plus an altitude scalar for drones).  Renderers are pure
functions of the true state; the attacker only ever rewrites rendered frames
through :func:`apply_spoofs`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from ..errors import IncompatibleTransform, InputError, ParseError
from ..flows import Sensor, parse_sensor

LIDAR_BEAMS = 360
LIDAR_RANGE = 100.0
CAMERA_FOV = math.pi / 2
CAMERA_RANGE = 60.0
ULTRASONIC_RANGE = 5.0
ULTRASONIC_CONE = math.radians(15)
RADAR_RANGE = 150.0
RADAR_FOV = math.radians(60)

# truth angular rate above which camera frames smear and LiDAR sweeps thin out
BLUR_RATE = 0.5
BLUR_LIDAR_KEEP = 8


def wrap(a: float) -> float:
    """Normalize to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


# state


@dataclass(frozen=True)
class OperationState:
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    angular_rate: float = 0.0
    accel: float = 0.0  # longitudinal acceleration over the last step
    altitude: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise InputError("speed must be >= 0")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Obstacle:
    id: str
    cls: str  # vehicle | pedestrian | drone | wall
    position: tuple
    velocity: tuple = (0.0, 0.0)
    extent: float = 0.5

    def at(self, t: float) -> "Obstacle":
        p = (self.position[0] + self.velocity[0] * t, self.position[1] + self.velocity[1] * t)
        return replace(self, position=p)


@dataclass(frozen=True)
class Lane:
    centerline: tuple  # ((x, y), ...)
    half_width: float = 2.0

    def project(self, p) -> tuple:
        """(signed lateral offset, lane direction, along-lane s) of the closest point."""
        best = None
        s_acc = 0.0
        for a, b in zip(self.centerline, self.centerline[1:]):
            a, b = np.asarray(a, float), np.asarray(b, float)
            d = b - a
            seg = float(np.hypot(*d))
            u = float(np.clip(np.dot(np.asarray(p) - a, d) / (seg * seg), 0.0, 1.0))
            q = a + u * d
            dist = float(np.hypot(*(np.asarray(p) - q)))
            if best is None or dist < best[0]:
                cross = d[0] * (p[1] - a[1]) - d[1] * (p[0] - a[0])
                best = (dist, math.copysign(dist, cross) if dist > 0 else 0.0, math.atan2(d[1], d[0]), s_acc + u * seg)
            s_acc += seg
        return best[1], best[2], best[3]


@dataclass(frozen=True)
class Signal:
    id: str
    position: tuple
    state: str = "green"
    schedule: tuple = ()  # ((t, state), ...) switches
    stop_line: tuple | None = None  # ((x1, y1), (x2, y2))
    governs: bool = False  # applies to the ego lane

    def state_at(self, t: float) -> str:
        s = self.state
        for when, new in self.schedule:
            if t >= when:
                s = new
        return s


@dataclass(frozen=True)
class NoFlyZone:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x, y) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class Landmark:
    position: tuple
    tag: str


@dataclass(frozen=True)
class EnvironmentState:
    obstacles: tuple = ()
    lanes: tuple = ()
    signals: tuple = ()
    no_fly_zones: tuple = ()
    landmarks: tuple = ()

    def __post_init__(self):
        ids = [o.id for o in self.obstacles]
        if len(set(ids)) != len(ids):
            raise InputError("obstacle ids must be unique")

    def at(self, t: float) -> "EnvironmentState":
        return replace(self, obstacles=tuple(o.at(t) for o in self.obstacles))

    def in_no_fly_zone(self, x, y) -> bool:
        return any(z.contains(x, y) for z in self.no_fly_zones)


@dataclass(frozen=True)
class SystemState:
    operation: OperationState
    environment: EnvironmentState
    time: float = 0.0


# frames


@dataclass(frozen=True)
class GpsFrame:
    position: tuple
    altitude: float = 0.0


@dataclass(frozen=True)
class LidarFrame:
    points: np.ndarray  # (n, 2) vehicle frame
    beam_count: int = LIDAR_BEAMS
    max_range: float = LIDAR_RANGE


@dataclass(frozen=True)
class CameraObject:
    cls: str
    bearing: float
    distance: float
    id: str | None = None  # ground-truth id, kept for spoof predicates and evidence only


@dataclass(frozen=True)
class SignalView:
    bearing: float
    distance: float
    state: str
    id: str | None = None


@dataclass(frozen=True)
class CameraFrame:
    objects: tuple = ()
    lane_offset: float | None = None
    lane_heading: float | None = None  # lane direction relative to vehicle heading
    signals: tuple = ()


@dataclass(frozen=True)
class ImuFrame:
    accel: float
    angular_rate: float


@dataclass(frozen=True)
class MicFrame:
    commands: tuple = ()


@dataclass(frozen=True)
class UltrasonicFrame:
    distance: float | None = None


@dataclass(frozen=True)
class RadarTarget:
    distance: float
    radial_speed: float
    id: str | None = None


@dataclass(frozen=True)
class RadarFrame:
    targets: tuple = ()


FRAME_TYPES = {
    Sensor.GPS: GpsFrame,
    Sensor.LIDAR: LidarFrame,
    Sensor.CAMERA: CameraFrame,
    Sensor.IMU: ImuFrame,
    Sensor.MICROPHONE: MicFrame,
    Sensor.ULTRASONIC: UltrasonicFrame,
    Sensor.RADAR: RadarFrame,
}


def to_vehicle(op: OperationState, p) -> np.ndarray:
    d = np.asarray(p, float) - op.position
    c, s = math.cos(op.heading), math.sin(op.heading)
    return np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])


def to_world(x, y, heading, p) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    return np.array([x + c * p[0] - s * p[1], y + s * p[0] + c * p[1]])


def _raycast(op: OperationState, obstacles: Sequence[Obstacle], beams: int, max_range: float) -> np.ndarray:
    if not obstacles:
        return np.zeros((0, 2))
    ang = 2 * math.pi * np.arange(beams) / beams
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)  # vehicle frame
    centers = np.array([to_vehicle(op, o.position) for o in obstacles])
    radii = np.array([o.extent for o in obstacles])
    b = dirs @ centers.T  # (beams, obs)
    c = np.sum(centers**2, axis=1) - radii**2
    disc = b**2 - c
    with np.errstate(invalid="ignore"):
        t = b - np.sqrt(disc)
    t = np.where((disc >= 0) & (t > 0), t, np.inf)
    hit = t.min(axis=1)
    keep = hit <= max_range
    return np.round(dirs[keep] * hit[keep, None], 9)


def _lane_view(op, lanes):
    best = None
    for lane in lanes:
        off, direction, _ = lane.project((op.x, op.y))
        if abs(off) <= lane.half_width * 2 and (best is None or abs(off) < abs(best[0])):
            best = (off, direction)
    if best is None:
        return None, None
    return best[0], wrap(best[1] - op.heading)


def render_frames(truth: SystemState, suite, seed: int = 0, commands: Sequence = ()) -> dict:
    """Render every sensor in ``suite`` from the true state.

    ``commands`` are the scenario's scripted ``(time, text)`` voice commands.
    Rendering is noise-free; ``seed`` is accepted so noise models can be
    added without changing callers.
    """
    op, env, t = truth.operation, truth.environment.at(truth.time), truth.time
    blurred = abs(op.angular_rate) > BLUR_RATE
    frames = {}
    for sensor in suite:
        sensor = parse_sensor(sensor)
        if sensor is Sensor.GPS:
            frames[sensor] = GpsFrame((op.x, op.y), op.altitude)
        elif sensor is Sensor.LIDAR:
            # a smeared sweep keeps only every BLUR_LIDAR_KEEP-th beam
            beams = LIDAR_BEAMS // BLUR_LIDAR_KEEP if blurred else LIDAR_BEAMS
            frames[sensor] = LidarFrame(_raycast(op, env.obstacles, beams, LIDAR_RANGE), beams)
        elif sensor is Sensor.CAMERA:
            if blurred:
                frames[sensor] = CameraFrame()
                continue
            objs = []
            for o in env.obstacles:
                v = to_vehicle(op, o.position)
                dist, bearing = float(np.hypot(*v)), math.atan2(v[1], v[0])
                if dist <= CAMERA_RANGE and abs(bearing) <= CAMERA_FOV / 2:
                    objs.append(CameraObject(o.cls, bearing, dist, o.id))
            sigs = []
            for s in env.signals:
                v = to_vehicle(op, s.position)
                dist, bearing = float(np.hypot(*v)), math.atan2(v[1], v[0])
                if dist <= CAMERA_RANGE and abs(bearing) <= CAMERA_FOV / 2:
                    sigs.append(SignalView(bearing, dist, s.state_at(t), s.id))
            off, rel = _lane_view(op, env.lanes)
            frames[sensor] = CameraFrame(tuple(objs), off, rel, tuple(sigs))
        elif sensor is Sensor.IMU:
            frames[sensor] = ImuFrame(op.accel, op.angular_rate)
        elif sensor is Sensor.MICROPHONE:
            frames[sensor] = MicFrame(tuple(text for when, text in commands if when <= t + 1e-9))
        elif sensor is Sensor.ULTRASONIC:
            best = None
            for o in env.obstacles:
                v = to_vehicle(op, o.position)
                dist = float(np.hypot(*v)) - o.extent
                if abs(math.atan2(v[1], v[0])) <= ULTRASONIC_CONE and dist <= ULTRASONIC_RANGE:
                    best = dist if best is None else min(best, dist)
            frames[sensor] = UltrasonicFrame(None if best is None else max(0.0, best))
        elif sensor is Sensor.RADAR:
            tgts = []
            for o in env.obstacles:
                v = to_vehicle(op, o.position)
                dist = float(np.hypot(*v))
                if 0 < dist <= RADAR_RANGE and abs(math.atan2(v[1], v[0])) <= RADAR_FOV / 2:
                    los = (np.asarray(o.position) - op.position) / dist
                    rel_v = np.asarray(o.velocity) - op.speed * np.array([math.cos(op.heading), math.sin(op.heading)])
                    tgts.append(RadarTarget(dist, float(np.dot(rel_v, los)), o.id))
            frames[sensor] = RadarFrame(tuple(tgts))
    return frames


def is_blurred(op: OperationState) -> bool:
    return abs(op.angular_rate) > BLUR_RATE


# spoofing transforms


@dataclass(frozen=True)
class GpsShift:
    offset: tuple = (0.0, 0.0)
    drift: tuple = (0.0, 0.0)  # m/s, accumulated from the window start
    sensor = Sensor.GPS
    target = "operation"

    def apply(self, frame: GpsFrame, t, t0):
        dt = t - t0
        p = (frame.position[0] + self.offset[0] + self.drift[0] * dt, frame.position[1] + self.offset[1] + self.drift[1] * dt)
        return replace(frame, position=p)


@dataclass(frozen=True)
class LidarInject:
    points: tuple  # vehicle-frame template
    sensor = Sensor.LIDAR
    target = "environment"

    def apply(self, frame: LidarFrame, t, t0):
        extra = np.asarray(self.points, float).reshape(-1, 2)
        extra = extra[np.hypot(extra[:, 0], extra[:, 1]) <= frame.max_range]
        return replace(frame, points=np.vstack([frame.points.reshape(-1, 2), extra]))


@dataclass(frozen=True)
class LidarErase:
    center: tuple  # vehicle frame
    radius: float
    sensor = Sensor.LIDAR
    target = "environment"

    def apply(self, frame: LidarFrame, t, t0):
        p = frame.points.reshape(-1, 2)
        keep = np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1]) > self.radius
        return replace(frame, points=p[keep])


@dataclass(frozen=True)
class CameraClassFlip:
    src: str
    dst: str
    sensor = Sensor.CAMERA
    target = "environment"

    def apply(self, frame: CameraFrame, t, t0):
        objs = tuple(replace(o, cls=self.dst) if o.cls == self.src else o for o in frame.objects)
        return replace(frame, objects=objs)


@dataclass(frozen=True)
class CameraObjectInject:
    cls: str
    bearing: float
    distance: float
    sensor = Sensor.CAMERA
    target = "environment"

    def apply(self, frame: CameraFrame, t, t0):
        return replace(frame, objects=frame.objects + (CameraObject(self.cls, self.bearing, self.distance, None),))


def _matches(obj, key, value) -> bool:
    return getattr(obj, key, None) == value


@dataclass(frozen=True)
class CameraObjectErase:
    key: str  # "id" or "cls"
    value: str
    sensor = Sensor.CAMERA
    target = "environment"

    def apply(self, frame: CameraFrame, t, t0):
        return replace(frame, objects=tuple(o for o in frame.objects if not _matches(o, self.key, self.value)))


@dataclass(frozen=True)
class LaneShift:
    offset: float
    sensor = Sensor.CAMERA
    target = "environment"

    def apply(self, frame: CameraFrame, t, t0):
        if frame.lane_offset is None:
            return frame
        return replace(frame, lane_offset=frame.lane_offset + self.offset)


@dataclass(frozen=True)
class ImuBias:
    accel: float = 0.0
    angular: float = 0.0
    period: float = 0.0  # > 0 turns the bias into a zero-mean square wave (starts high for a quarter period)
    sensor = Sensor.IMU
    target = "operation"

    def factor(self, t, t0) -> float:
        if self.period <= 0:
            return 1.0
        return 1.0 if math.cos(2 * math.pi * (t - t0) / self.period) >= 0 else -1.0

    def apply(self, frame: ImuFrame, t, t0):
        f = self.factor(t, t0)
        return ImuFrame(frame.accel + f * self.accel, frame.angular_rate + f * self.angular)


@dataclass(frozen=True)
class MicInject:
    command: str
    sensor = Sensor.MICROPHONE
    target = "mission"

    def apply(self, frame: MicFrame, t, t0):
        return MicFrame(frame.commands + (self.command,))


@dataclass(frozen=True)
class UltrasonicFake:
    distance: float
    sensor = Sensor.ULTRASONIC
    target = "environment"

    def apply(self, frame: UltrasonicFrame, t, t0):
        return UltrasonicFrame(min(self.distance, ULTRASONIC_RANGE))


@dataclass(frozen=True)
class RadarInject:
    distance: float
    radial_speed: float = 0.0
    sensor = Sensor.RADAR
    target = "environment"

    def apply(self, frame: RadarFrame, t, t0):
        return RadarFrame(frame.targets + (RadarTarget(self.distance, self.radial_speed, None),))


@dataclass(frozen=True)
class RadarAbsorb:
    key: str
    value: str
    sensor = Sensor.RADAR
    target = "environment"

    def apply(self, frame: RadarFrame, t, t0):
        return RadarFrame(tuple(x for x in frame.targets if not _matches(x, self.key, self.value)))


TRANSFORMS = {
    cls.__name__: cls
    for cls in (GpsShift, LidarInject, LidarErase, CameraClassFlip, CameraObjectInject, CameraObjectErase,
                LaneShift, ImuBias, MicInject, UltrasonicFake, RadarInject, RadarAbsorb)  # fmt: skip
}


@dataclass(frozen=True)
class SpoofSpec:
    sensor: Sensor
    window: tuple  # [t_start, t_end)
    transform: object

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise InputError(f"spoof window must have start < end, got {self.window}")
        if self.transform.sensor is not self.sensor:
            raise IncompatibleTransform(f"{type(self.transform).__name__} cannot act on {self.sensor}")

    @property
    def kind(self) -> str:
        return type(self.transform).__name__

    def active(self, t: float) -> bool:
        return self.window[0] - 1e-9 <= t < self.window[1] - 1e-9


def apply_spoofs(frames: Mapping, specs: Sequence[SpoofSpec], t: float) -> dict:
    """Return a new frame map with every in-window spec applied in list order."""
    out = dict(frames)
    for spec in specs:
        if not spec.active(t):
            continue
        if spec.sensor not in out:
            raise IncompatibleTransform(f"{spec.kind} targets {spec.sensor}, which is not in the sensor suite")
        out[spec.sensor] = spec.transform.apply(out[spec.sensor], t, spec.window[0])
    return out


# spoof files: one spec per line, "Kind start=<s> end=<s> key=value ..."


def _vec(text):
    return tuple(float(v) for v in text.split(","))


def phantom_points(at, n=12, radius=0.4):
    """Vehicle-frame returns of a small round object: the near half of a circle."""
    cx, cy = at
    facing = math.atan2(-cy, -cx)
    ang = facing + np.linspace(-math.pi / 2, math.pi / 2, n)
    return tuple((round(cx + radius * math.cos(a), 6), round(cy + radius * math.sin(a), 6)) for a in ang)


def _build(kind, kv):
    if kind == "GpsShift":
        return GpsShift(_vec(kv.pop("offset", "0,0")), _vec(kv.pop("drift", "0,0")))
    if kind == "LidarInject":
        if "points" in kv:
            pts = tuple(_vec(p) for p in kv.pop("points").split(";") if p)
        else:
            pts = phantom_points(_vec(kv.pop("at")), int(kv.pop("n", 12)), float(kv.pop("radius", 0.4)))
        return LidarInject(pts)
    if kind == "LidarErase":
        return LidarErase(_vec(kv.pop("center")), float(kv.pop("radius")))
    if kind == "CameraClassFlip":
        return CameraClassFlip(kv.pop("from"), kv.pop("to"))
    if kind == "CameraObjectInject":
        return CameraObjectInject(kv.pop("cls"), float(kv.pop("bearing")), float(kv.pop("distance")))
    if kind in ("CameraObjectErase", "RadarAbsorb"):
        (key, value), = [(k, kv.pop(k)) for k in ("id", "cls") if k in kv]
        return TRANSFORMS[kind](key, value)
    if kind == "LaneShift":
        return LaneShift(float(kv.pop("offset")))
    if kind == "ImuBias":
        return ImuBias(float(kv.pop("accel", 0)), float(kv.pop("angular", 0)), float(kv.pop("period", 0)))
    if kind == "MicInject":
        return MicInject(kv.pop("command").replace("+", " "))
    if kind == "UltrasonicFake":
        return UltrasonicFake(float(kv.pop("distance")))
    if kind == "RadarInject":
        return RadarInject(float(kv.pop("distance")), float(kv.pop("radial_speed", 0)))
    raise KeyError(kind)


def parse_spoofs(text: str, source=None) -> list:
    """Parse a spoof file.

    Each non-comment line is ``Kind start=<s> end=<s> [sensor=<name>] key=value ...``;
    vectors are comma-separated (``offset=0,-4``) and plus signs in a
    ``command`` stand for spaces.
    """
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *tokens = line.split()
        if kind not in TRANSFORMS:
            raise ParseError(f"unknown spoof kind {kind!r}", lineno, source)
        try:
            kv = dict(tok.split("=", 1) for tok in tokens)
        except ValueError:
            raise ParseError("expected key=value tokens", lineno, source) from None
        try:
            start, end = float(kv.pop("start", 0.0)), float(kv.pop("end", math.inf))
            sensor = parse_sensor(kv.pop("sensor")) if "sensor" in kv else TRANSFORMS[kind].sensor
            transform = _build(kind, kv)
        except (KeyError, ValueError, InputError) as exc:
            raise ParseError(f"bad {kind} parameters: {exc}", lineno, source) from None
        if kv:
            raise ParseError(f"unknown {kind} parameter(s): {', '.join(sorted(kv))}", lineno, source)
        try:
            specs.append(SpoofSpec(sensor, (start, end), transform))
        except IncompatibleTransform as exc:
            raise ParseError(str(exc), lineno, source) from None
        except InputError as exc:
            raise ParseError(str(exc), lineno, source) from None
    return specs


def format_spoof(spec: SpoofSpec) -> str:
    """One spoof-file line; ``parse_spoofs(format_spoof(s))`` gives ``s`` back."""
    tr = spec.transform
    end = "inf" if math.isinf(spec.window[1]) else f"{spec.window[1]:g}"
    head = f"{spec.kind} start={spec.window[0]:g} end={end}"
    if spec.sensor is not tr.sensor:
        head += f" sensor={spec.sensor.value}"

    def v(p):
        return ",".join(f"{c:.10g}" for c in p)

    if isinstance(tr, GpsShift):
        return f"{head} offset={v(tr.offset)} drift={v(tr.drift)}"
    if isinstance(tr, LidarInject):
        return f"{head} points={';'.join(v(p) for p in tr.points)}"
    if isinstance(tr, LidarErase):
        return f"{head} center={v(tr.center)} radius={tr.radius:g}"
    if isinstance(tr, CameraClassFlip):
        return f"{head} from={tr.src} to={tr.dst}"
    if isinstance(tr, CameraObjectInject):
        return f"{head} cls={tr.cls} bearing={tr.bearing:g} distance={tr.distance:g}"
    if isinstance(tr, (CameraObjectErase, RadarAbsorb)):
        return f"{head} {tr.key}={tr.value}"
    if isinstance(tr, LaneShift):
        return f"{head} offset={tr.offset:g}"
    if isinstance(tr, ImuBias):
        return f"{head} accel={tr.accel:g} angular={tr.angular:g} period={tr.period:g}"
    if isinstance(tr, MicInject):
        return f"{head} command={tr.command.replace(' ', '+')}"
    if isinstance(tr, UltrasonicFake):
        return f"{head} distance={tr.distance:g}"
    if isinstance(tr, RadarInject):
        return f"{head} distance={tr.distance:g} radial_speed={tr.radial_speed:g}"
    return head
