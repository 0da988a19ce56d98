"""Black-box placement attack on a point-cloud object detector.

An adversarial object (by default a small quadcopter-shaped cluster) is
dropped into a LiDAR scene near a target obstacle.  Its 6-DoF placement is
tuned with a zeroth-order gradient estimate and sign steps so the detector's
box for the target moves as far as possible from where it was.
"""
from __future__ import annotations

import enum
import itertools
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.transform import Rotation

from .errors import InputError, NoAcceptedSamples, ParseError, TargetNotFound

PARAM_NAMES = ("x", "y", "z", "alpha", "beta", "gamma")


@dataclass(frozen=True)
class Placement:
    """Translation in meters; alpha/beta/gamma rotate about Z/Y/X."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.alpha, self.beta, self.gamma], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Placement":
        return cls(*(float(v) for v in a))

    def __str__(self):
        return " ".join(f"{n}={v:.4f}" for n, v in zip(PARAM_NAMES, self.as_array()))


@dataclass(frozen=True)
class Bounds:
    lo: tuple = (-1.5, -1.5, -0.5, -math.pi, -math.pi, -math.pi)
    hi: tuple = (1.5, 1.5, 0.5, math.pi, math.pi, math.pi)

    def __post_init__(self):
        if len(self.lo) != 6 or len(self.hi) != 6 or any(a > b for a, b in zip(self.lo, self.hi)):
            raise InputError("bounds need six (lo <= hi) pairs")

    def clamp(self, s: np.ndarray) -> np.ndarray:
        return np.clip(s, self.lo, self.hi)

    def contains(self, s, tol=1e-12) -> bool:
        s = np.asarray(s)
        return bool(np.all(s >= np.asarray(self.lo) - tol) and np.all(s <= np.asarray(self.hi) + tol))

    @property
    def diagonal(self) -> float:
        """Length of the translation-box diagonal."""
        return float(np.linalg.norm(np.subtract(self.hi[:3], self.lo[:3])))


def transform_object(template: np.ndarray, s: Placement) -> np.ndarray:
    """Rotate about X by gamma, then Y by beta, then Z by alpha; then translate."""
    template = np.asarray(template, dtype=float).reshape(-1, 3)
    rot = Rotation.from_euler("xyz", [s.gamma, s.beta, s.alpha])
    return rot.apply(template) + np.array([s.x, s.y, s.z])


def drone_template() -> np.ndarray:
    """A flat X-shaped quadcopter of 40 points, point-symmetric about the origin."""
    pts = []
    for k in range(4):
        ang = math.pi / 4 + k * math.pi / 2
        d = np.array([math.cos(ang), math.sin(ang), 0.0])
        for r in np.arange(1, 9) * 0.08:
            pts.append(r * d)
        tip = 0.64 * d
        side = np.array([-d[1], d[0], 0.0])
        pts.append(tip + 0.12 * side)
        pts.append(tip - 0.12 * side)
    return np.round(np.array(pts), 6)


# detector


@dataclass(frozen=True)
class DetectionBox:
    location: np.ndarray
    size: np.ndarray
    heading: float
    confidence: float
    label: str = "object"
    n_points: int = 0


@dataclass(frozen=True)
class DetectorConfig:
    voxel: float = 0.5
    n_ref: int = 50
    c_min: float = 0.2


def cluster_labels(cloud: np.ndarray, voxel: float) -> tuple:
    """Connected components of points whose voxel indices are neighbours (26-connectivity)."""
    n = len(cloud)
    if n == 0:
        return 0, np.zeros(0, dtype=int)
    idx = np.floor(cloud / voxel).astype(np.int64)
    adj = np.abs(idx[:, None, :] - idx[None, :, :]).max(axis=2) <= 1
    r, c = np.nonzero(adj)
    g = coo_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(n, n))
    return connected_components(g, directed=False)


def reference_detector(cloud, cfg: DetectorConfig = DetectorConfig()) -> list:
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    n_comp, labels = cluster_labels(cloud, cfg.voxel)
    boxes = []
    for k in range(n_comp):
        pts = cloud[labels == k]
        conf = min(1.0, len(pts) / cfg.n_ref)
        if conf < cfg.c_min:
            continue
        boxes.append(DetectionBox(pts.mean(axis=0), pts.max(axis=0) - pts.min(axis=0), 0.0, conf, "object", len(pts)))
    boxes.sort(key=lambda b: tuple(b.location))
    return boxes


# scene and loss


class Objective(str, enum.Enum):
    DISPLACE = "displace_location"
    SUPPRESS = "suppress_confidence"
    BOOST = "boost_confidence"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TargetMatcher:
    """Selects the box nearest ``location`` on the clean scene, within ``radius``."""

    location: tuple
    radius: float = 2.0

    def select(self, boxes: Sequence[DetectionBox]) -> DetectionBox:
        if not boxes:
            raise TargetNotFound("detector returned no boxes on the clean scene")
        loc = np.asarray(self.location, dtype=float)
        d = [float(np.linalg.norm(b.location - loc)) for b in boxes]
        i = int(np.argmin(d))
        if d[i] > self.radius:
            raise TargetNotFound(f"no box within {self.radius} m of {tuple(self.location)}")
        return boxes[i]


@dataclass(frozen=True)
class Scene:
    points: np.ndarray
    target: TargetMatcher
    template: np.ndarray = field(default_factory=drone_template)
    anchor: tuple | None = None  # placement origin; defaults to the target location

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.anchor if self.anchor is not None else self.target.location, dtype=float)


class PlacementLoss:
    """loss(s) for one scene, detector and objective; memoized on the placed object."""

    def __init__(self, scene: Scene, detector: Callable = reference_detector, objective=Objective.DISPLACE,
                 bounds: Bounds = Bounds(), cache: bool = True):  # fmt: skip
        self.scene = scene
        self.detector = detector
        self.objective = Objective(objective)
        self.cap = bounds.diagonal**2
        self.clean = scene.target.select(detector(scene.points))
        self._cache = {} if cache else None
        self.evaluations = 0

    def attacked_cloud(self, s: Placement) -> np.ndarray:
        obj = transform_object(self.scene.template, s) + self.scene.origin
        return np.vstack([self.scene.points, obj])

    def _match(self, boxes):
        """Box nearest the clean target; None if it vanished (nothing within the cap radius)."""
        if not boxes:
            return None
        d = [float(np.linalg.norm(b.location - self.clean.location)) for b in boxes]
        i = int(np.argmin(d))
        return boxes[i] if d[i] ** 2 <= self.cap else None

    def _evaluate(self, cloud) -> float:
        box = self._match(self.detector(cloud))
        if self.objective is Objective.DISPLACE:
            if box is None:
                return self.cap
            return float(np.sum((box.location - self.clean.location) ** 2))
        conf = 0.0 if box is None else box.confidence
        delta = self.clean.confidence - conf
        return delta if self.objective is Objective.SUPPRESS else -delta

    def __call__(self, s) -> float:
        if not isinstance(s, Placement):
            s = Placement.from_array(s)
        cloud = self.attacked_cloud(s)
        if self._cache is None:
            self.evaluations += 1
            return self._evaluate(cloud)
        key = np.round(cloud[len(self.scene.points):], 6)
        key = key[np.lexsort(key.T[::-1])].tobytes()
        if key not in self._cache:
            self.evaluations += 1
            self._cache[key] = self._evaluate(cloud)
        return self._cache[key]


def loss(detector, X, obj, s: Placement, target: TargetMatcher, objective=Objective.DISPLACE, bounds=Bounds()) -> float:
    scene = Scene(np.asarray(X, dtype=float), target, np.asarray(obj, dtype=float))
    return PlacementLoss(scene, detector, objective, bounds, cache=False)(s)


# optimizer


@dataclass(frozen=True)
class OptimizerConfig:
    iterations: int = 50
    samples: int = 20
    epsilon: float = 0.1
    threshold: float = 0.0
    bounds: Bounds = Bounds()
    max_sample_attempts: int = 200
    seed: int = 0
    objective: Objective = Objective.DISPLACE
    # False: average the m accepted samples, then take one sign step per iteration.
    # True: the listing-style schedule, a sign step after every sample draw.
    per_sample_update: bool = False

    def __post_init__(self):
        if self.iterations < 0 or self.samples < 1 or not self.epsilon > 0:
            raise InputError("need iterations >= 0, samples >= 1, epsilon > 0")
        if self.max_sample_attempts < self.samples:
            raise InputError("max_sample_attempts must be >= samples")


def estimate_gradient(loss_fn: Callable, s, cfg: OptimizerConfig, rng: np.random.Generator) -> np.ndarray:
    """(1/m) * sum of loss(s + eps*u_i) * u_i / eps over m samples passing loss > threshold."""
    s = np.asarray(s, dtype=float)
    grad = np.zeros_like(s)
    accepted = attempts = 0
    while accepted < cfg.samples and attempts < cfg.max_sample_attempts:
        u = rng.uniform(-1.0, 1.0, size=s.shape)
        attempts += 1
        val = loss_fn(s + cfg.epsilon * u)
        if val > cfg.threshold:
            grad += val * u / cfg.epsilon
            accepted += 1
    if accepted == 0:
        raise NoAcceptedSamples(f"no sample beat threshold {cfg.threshold} in {attempts} draws")
    return grad / cfg.samples


@dataclass
class OptimizationResult:
    placement: Placement
    loss: float
    history: list  # best-so-far loss after each iteration
    trajectory: list  # placement after each iteration
    initial: Placement
    skipped: int = 0  # iterations with no accepted sample


def _per_sample_iteration(loss_fn, s, cfg, rng, best, best_s):
    grad = np.zeros_like(s)
    accepted = attempts = 0
    while accepted < cfg.samples and attempts < cfg.max_sample_attempts:
        u = rng.uniform(-1.0, 1.0, size=s.shape)
        attempts += 1
        val = loss_fn(s + cfg.epsilon * u)
        if val > cfg.threshold:
            accepted += 1
            grad = grad + val * u / cfg.epsilon
        grad = grad / cfg.samples
        s = cfg.bounds.clamp(s + np.sign(grad) * cfg.epsilon)
        val = loss_fn(s)
        if val > best:
            best, best_s = val, s.copy()
    return s, best, best_s, accepted > 0


def optimize(loss_fn: Callable, cfg: OptimizerConfig = OptimizerConfig()) -> OptimizationResult:
    rng = np.random.default_rng(cfg.seed)
    s = cfg.bounds.clamp(rng.uniform(-1.0, 1.0, size=6))
    initial = Placement.from_array(s)
    best_s, best = s.copy(), loss_fn(s)
    history, trajectory, skipped = [], [], 0
    for _ in range(cfg.iterations):
        if cfg.per_sample_update:
            s, best, best_s, ok = _per_sample_iteration(loss_fn, s, cfg, rng, best, best_s)
            skipped += not ok
        else:
            try:
                g = estimate_gradient(loss_fn, s, cfg, rng)
            except NoAcceptedSamples:
                g = np.zeros(6)
                skipped += 1
            s = cfg.bounds.clamp(s + np.sign(g) * cfg.epsilon)
        val = loss_fn(s)
        if val > best:
            best, best_s = val, s.copy()
        history.append(best)
        trajectory.append(Placement.from_array(s))
    return OptimizationResult(Placement.from_array(best_s), best, history, trajectory, initial, skipped)


def optimize_placement(detector, X, obj, target: TargetMatcher, cfg: OptimizerConfig = OptimizerConfig()) -> OptimizationResult:
    scene = Scene(np.asarray(X, dtype=float), target, np.asarray(obj, dtype=float))
    return optimize(PlacementLoss(scene, detector, cfg.objective, cfg.bounds), cfg)


def _axis(lo, hi, step):
    if hi - lo < 1e-12:
        return np.array([lo])
    n = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def grid_search(loss_fn: Callable, bounds: Bounds = Bounds(), grid_step=0.25, angle_step=math.pi / 2):
    """Exhaustive argmax over the translation x angle grid; ties keep the first grid point."""
    if grid_step <= 0 or angle_step <= 0:
        raise InputError("grid steps must be positive")
    axes = []
    for k in range(6):
        lo, hi = bounds.lo[k], bounds.hi[k]
        ax = _axis(lo, hi, grid_step if k < 3 else angle_step)
        if k >= 3 and hi - lo >= 2 * math.pi - 1e-9 and len(ax) > 1 and abs(ax[-1] - ax[0] - 2 * math.pi) < 1e-9:
            ax = ax[:-1]  # -pi and pi are the same rotation
        axes.append(ax)
    best_s, best = None, -math.inf
    for combo in itertools.product(*axes):
        v = loss_fn(np.array(combo))
        if v > best:
            best, best_s = v, combo
    return Placement.from_array(best_s), best


def brute_force_oracle(detector, X, obj, target: TargetMatcher, bounds: Bounds = Bounds(), grid_step=0.25,
                       angle_step=math.pi / 2, objective=Objective.DISPLACE):  # fmt: skip
    scene = Scene(np.asarray(X, dtype=float), target, np.asarray(obj, dtype=float))
    return grid_search(PlacementLoss(scene, detector, objective, bounds), bounds, grid_step, angle_step)


# scene files


def reference_scene() -> Scene:
    """Target vehicle cluster (60 points) 10 m ahead plus a pedestrian cluster off to the side."""
    gx, gy, gz = np.meshgrid(np.arange(5) * 0.4, np.arange(4) * 0.4, np.arange(3) * 0.4, indexing="ij")
    car = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    car = car - car.mean(axis=0) + np.array([10.0, 0.0, 0.8])
    px, pz = np.meshgrid(np.arange(3) * 0.2, np.arange(10) * 0.18, indexing="ij")
    ped = np.stack([px.ravel(), np.zeros(px.size), pz.ravel()], axis=1) + np.array([9.0, 6.0, 0.1])
    pts = np.round(np.vstack([car, ped]), 6)
    return Scene(pts, TargetMatcher((10.0, 0.0, 0.8), 1.0), drone_template())


def parse_scene(text: str, source=None) -> Scene:
    """Lines: ``target x y z [radius]``, ``template drone``, ``template_point x y z``, ``x y z``."""
    pts, tmpl, target, use_drone = [], [], None, False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "target":
                vals = [float(v) for v in parts[1:]]
                if len(vals) not in (3, 4):
                    raise ValueError("target needs x y z [radius]")
                target = TargetMatcher(tuple(vals[:3]), vals[3] if len(vals) == 4 else 2.0)
            elif parts[0] == "template":
                if parts[1:] != ["drone"]:
                    raise ValueError(f"unknown template {' '.join(parts[1:])!r}")
                use_drone = True
            elif parts[0] == "template_point":
                tmpl.append([float(v) for v in parts[1:4]])
            else:
                if len(parts) != 3:
                    raise ValueError("expected 'x y z'")
                pts.append([float(v) for v in parts])
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), lineno, source) from None
    if target is None:
        raise ParseError("scene has no target line", None, source)
    template = np.array(tmpl, dtype=float) if tmpl else drone_template()
    if tmpl and use_drone:
        raise ParseError("give either 'template drone' or template_point lines, not both", None, source)
    cloud = np.array(pts, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(cloud)):
        raise ParseError("non-finite coordinates", None, source)
    return Scene(cloud, target, template)


def format_scene(scene: Scene) -> str:
    t = scene.target
    out = [f"target {t.location[0]:g} {t.location[1]:g} {t.location[2]:g} {t.radius:g}", "template drone"]
    out += [f"{x:.6g} {y:.6g} {z:.6g}" for x, y, z in scene.points]
    return "\n".join(out) + "\n"


def load_scene(path=None) -> Scene:
    if path is None:
        text = resources.files("rvspoof").joinpath("data/reference_scene.txt").read_text(encoding="utf-8")
        return parse_scene(text, "reference_scene.txt")
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_scene(fh.read(), os.fspath(path))


# optimizer config files


def optimizer_config_from_dict(doc: dict, source=None) -> OptimizerConfig:
    """Build a config from a mapping with OptimizerConfig field names.

    ``bounds`` is a table with ``lo`` and ``hi`` six-vectors.
    """
    kw = dict(doc)
    try:
        if "bounds" in kw:
            b = kw.pop("bounds")
            kw["bounds"] = Bounds(tuple(float(v) for v in b["lo"]), tuple(float(v) for v in b["hi"]))
        if "objective" in kw:
            kw["objective"] = Objective(kw["objective"])
        return OptimizerConfig(**kw)
    except (TypeError, KeyError, ValueError) as exc:
        raise ParseError(f"bad optimizer config: {exc}", None, source) from None


def load_optimizer_config(path) -> OptimizerConfig:
    from . import _toml

    return optimizer_config_from_dict(_toml.read(os.fspath(path)), os.fspath(path))

