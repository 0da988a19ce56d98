"""Keypoint loop-closure detection and the feature-injection attack.

Keypoints carry an opaque 256-bit binary descriptor.  Two keyframes match via
mutual nearest neighbours in Hamming distance; matched pairs are binned by
their relative angle and only bins holding at least three pairs count toward
the similarity score.  The attack copies target keypoints into the current
frame, rotated so every copy lands in a few shared angle bins, until the
detector accepts a (false) loop closure.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import BudgetExhausted, InputError, ParseError

DESCRIPTOR_BYTES = 32


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def distance(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    angle: float
    scale: float
    descriptor: bytes

    def __post_init__(self):
        if not self.scale > 0:
            raise InputError(f"keypoint scale must be positive, got {self.scale}")
        if len(self.descriptor) != DESCRIPTOR_BYTES:
            raise InputError(f"descriptor must be {DESCRIPTOR_BYTES} bytes, got {len(self.descriptor)}")


@dataclass(frozen=True)
class Keyframe:
    id: int
    pose: Pose
    keypoints: tuple = ()

    def descriptors(self) -> np.ndarray:
        if not self.keypoints:
            return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
        return np.frombuffer(b"".join(k.descriptor for k in self.keypoints), dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)

    def with_keypoints(self, extra: Sequence[Keypoint]) -> "Keyframe":
        return replace(self, keypoints=self.keypoints + tuple(extra))


@dataclass(frozen=True)
class LoopClosureConfig:
    max_distance: int = 40  # bits
    scale_ratio: float = 1.3
    bin_width: float = math.pi / 12
    min_matches: int = 34
    min_groups: int = 3
    min_group_size: int = 3

    def __post_init__(self):
        if min(self.max_distance, self.scale_ratio, self.bin_width, self.min_matches, self.min_groups) <= 0:
            raise InputError("loop-closure parameters must be positive")
        if self.min_matches < self.min_groups:
            raise InputError("min_matches must be >= min_groups")
        if self.scale_ratio < 1:
            raise InputError("scale_ratio must be >= 1")

    @property
    def n_bins(self) -> int:
        return int(math.ceil(2 * math.pi / self.bin_width))


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple  # (index in a, index in b, hamming distance)
    groups: dict = field(default_factory=dict)  # angle bin -> tuple of pair indices
    similarity: int = 0
    consistent_groups: int = 0


def hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    if len(da) == 0 or len(db) == 0:
        return np.zeros((len(da), len(db)), dtype=np.int64)
    x = np.bitwise_xor(da[:, None, :], db[None, :, :])
    return np.unpackbits(x, axis=2).sum(axis=2, dtype=np.int64)


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return (a + math.pi) % (2 * math.pi) - math.pi


def angle_bin(rel: float, cfg: LoopClosureConfig) -> int:
    return int(math.floor((wrap_angle(rel) + math.pi) / cfg.bin_width)) % cfg.n_bins


def bin_center(b: int, cfg: LoopClosureConfig) -> float:
    return -math.pi + (b + 0.5) * cfg.bin_width


def match_keyframes(a: Keyframe, b: Keyframe, cfg: LoopClosureConfig = LoopClosureConfig()) -> MatchResult:
    d = hamming_matrix(a.descriptors(), b.descriptors())
    pairs = []
    if d.size:
        best_b = d.argmin(axis=1)
        best_a = d.argmin(axis=0)
        for i, j in enumerate(best_b):
            if best_a[j] != i or d[i, j] > cfg.max_distance:
                continue
            ratio = b.keypoints[j].scale / a.keypoints[i].scale
            if not (1 / cfg.scale_ratio <= ratio <= cfg.scale_ratio):
                continue
            pairs.append((i, int(j), int(d[i, j])))
    groups = {}
    for n, (i, j, _) in enumerate(pairs):
        rel = b.keypoints[j].angle - a.keypoints[i].angle
        groups.setdefault(angle_bin(rel, cfg), []).append(n)
    groups = {k: tuple(v) for k, v in sorted(groups.items())}
    big = [v for v in groups.values() if len(v) >= cfg.min_group_size]
    return MatchResult(tuple(pairs), groups, sum(len(v) for v in big), len(big))


def is_closure(m: MatchResult, cfg: LoopClosureConfig) -> bool:
    return m.similarity >= cfg.min_matches and m.consistent_groups >= cfg.min_groups


def detect_loop_closure(current: Keyframe, db: Sequence[Keyframe], cfg: LoopClosureConfig = LoopClosureConfig()):
    """Return ``(keyframe id, MatchResult)`` for the accepted closure, or None."""
    if not db:
        raise InputError("map database is empty")
    ids = [k.id for k in db]
    if len(set(ids)) != len(ids):
        raise InputError("keyframe ids must be unique within a map database")
    best = None
    for kf in sorted(db, key=lambda k: k.id):
        m = match_keyframes(current, kf, cfg)
        if best is None or m.similarity > best[1].similarity:
            best = (kf.id, m)
    if best is not None and is_closure(best[1], cfg):
        return best
    return None


def _pick_bins(m: MatchResult, cfg: LoopClosureConfig) -> list:
    """Angle bins to pile injected pairs into: the fullest existing ones first."""
    ranked = sorted(m.groups, key=lambda b: (-len(m.groups[b]), b))
    chosen = ranked[: cfg.min_groups]
    for b in range(cfg.n_bins):
        if len(chosen) >= cfg.min_groups:
            break
        if b not in chosen:
            chosen.append(b)
    return chosen


def inject_features(current: Keyframe, target: Keyframe, cfg: LoopClosureConfig = LoopClosureConfig(), budget: int = 34, db=None):
    """Copy target keypoints into ``current`` until a closure on ``target`` fires.

    Returns ``(modified keyframe, injected keypoints)``.  Raises
    :class:`BudgetExhausted` with the achieved similarity if the budget (or
    the supply of unmatched target keypoints) runs out first.
    """
    if budget < 0:
        raise InputError("budget must be >= 0")
    db = [target] if db is None else list(db)

    def fired(frame):
        hit = detect_loop_closure(frame, db, cfg)
        return hit is not None and hit[0] == target.id

    m0 = match_keyframes(current, target, cfg)
    if fired(current):
        return current, []
    matched = {j for _, j, _ in m0.pairs}
    bins = _pick_bins(m0, cfg)
    counts = {b: len(m0.groups.get(b, ())) for b in bins}
    candidates = [j for j in range(len(target.keypoints)) if j not in matched]

    frame, injected = current, []
    m = m0
    for j in candidates:
        if len(injected) >= budget:
            break
        # top up every chosen bin to a counting group, then keep stacking the fullest
        short = [b for b in bins if counts[b] < cfg.min_group_size]
        b = short[0] if short else bins[0]
        src = target.keypoints[j]
        kp = Keypoint(src.x, src.y, wrap_angle(src.angle - bin_center(b, cfg)), src.scale, src.descriptor)
        frame = frame.with_keypoints([kp])
        injected.append(kp)
        counts[b] += 1
        m = match_keyframes(frame, target, cfg)
        if fired(frame):
            return frame, injected
    raise BudgetExhausted(
        f"no loop closure after {len(injected)} injected keypoints (similarity {m.similarity})",
        similarity=m.similarity,
        injected=injected,
    )


def relocalize(est_pose: Pose, target: Keyframe) -> Pose:
    return target.pose


# fixture files


@dataclass(frozen=True)
class Fixture:
    current: Keyframe
    target: Keyframe
    others: tuple = ()

    @property
    def db(self) -> list:
        return [self.target, *self.others]


_HEADER = re.compile(r"^frame\s+(.*)$")


def parse_fixture(text: str, source=None) -> Fixture:
    frames = []  # (role, id, pose, keypoints)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        h = _HEADER.match(line)
        if h:
            kv = dict(tok.split("=", 1) for tok in h.group(1).split() if "=" in tok)
            try:
                pose = Pose(float(kv["x"]), float(kv["y"]), float(kv.get("heading", 0.0)))
                frames.append([kv.get("role", "map"), int(kv["id"]), pose, []])
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad frame header: {exc}", lineno, source) from None
            continue
        if not frames:
            raise ParseError("keypoint before any frame header", lineno, source)
        parts = line.split()
        if len(parts) != 5:
            raise ParseError("expected 'x y angle scale hexdescriptor'", lineno, source)
        try:
            kp = Keypoint(float(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]), bytes.fromhex(parts[4]))
        except (ValueError, InputError) as exc:
            raise ParseError(str(exc), lineno, source) from None
        frames[-1][3].append(kp)
    by_role = {"current": [], "target": [], "map": []}
    for role, fid, pose, kps in frames:
        if role not in by_role:
            raise ParseError(f"unknown frame role {role!r}", None, source)
        by_role[role].append(Keyframe(fid, pose, tuple(kps)))
    if len(by_role["current"]) != 1 or len(by_role["target"]) != 1:
        raise ParseError("fixture needs exactly one current and one target frame", None, source)
    return Fixture(by_role["current"][0], by_role["target"][0], tuple(by_role["map"]))


def format_fixture(fx: Fixture) -> str:
    out = []
    for role, kf in [("current", fx.current), ("target", fx.target)] + [("map", k) for k in fx.others]:
        out.append(f"frame id={kf.id} x={kf.pose.x:g} y={kf.pose.y:g} heading={kf.pose.heading:.6f} role={role}")
        for k in kf.keypoints:
            out.append(f"{k.x:.2f} {k.y:.2f} {k.angle:.6f} {k.scale:.4f} {k.descriptor.hex()}")
    return "\n".join(out) + "\n"


def load_fixture(path=None) -> Fixture:
    """Load a keyframe fixture; ``None`` loads the shipped T-turn/straight-road fixture."""
    if path is None:
        text = resources.files("rvspoof").joinpath("data/loopclosure_fixture.txt").read_text(encoding="utf-8")
        return parse_fixture(text, "loopclosure_fixture.txt")
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_fixture(fh.read(), os.fspath(path))


def make_reference_fixture(seed: int = 7, n_keypoints: int = 60, pre_matched=(4, 4, 4), n_map: int = 2) -> Fixture:
    """Synthesize the T-turn (current) / straight-road (target) fixture.

    ``pre_matched[g]`` keypoints of the target reappear in the current frame
    with a few flipped bits and a relative angle in bin ``g``; everything
    else has independent random descriptors (~128 bits apart).
    """
    rng = np.random.default_rng(seed)
    cfg = LoopClosureConfig()

    def rand_kps(n):
        desc = rng.integers(0, 256, size=(n, DESCRIPTOR_BYTES), dtype=np.uint8)
        xy = rng.uniform([0, 0], [640, 480], size=(n, 2))
        ang = rng.uniform(-math.pi, math.pi, size=n)
        sc = 1.2 ** rng.integers(0, 8, size=n)
        return [Keypoint(float(round(x, 2)), float(round(y, 2)), float(round(a, 6)), float(round(s, 4)), d.tobytes())
                for (x, y), a, s, d in zip(xy, ang, sc, desc)]  # fmt: skip

    target_kps = rand_kps(n_keypoints)
    current_kps = rand_kps(n_keypoints)
    # pre-existing coincidental matches sit in bins spread around the circle
    slot = 0
    for g, count in enumerate(pre_matched):
        b = (5 + 7 * g) % cfg.n_bins
        for _ in range(count):
            j = 3 * slot + 1
            src = target_kps[j]
            d = bytearray(src.descriptor)
            for bit in rng.choice(256, size=6, replace=False):
                d[bit // 8] ^= 1 << (bit % 8)
            ang = wrap_angle(src.angle - bin_center(b, cfg))
            current_kps[2 * slot] = Keypoint(current_kps[2 * slot].x, current_kps[2 * slot].y, float(round(ang, 6)), src.scale, bytes(d))
            slot += 1
    current = Keyframe(100, Pose(120.0, 40.0, math.pi / 2), tuple(current_kps))
    target = Keyframe(3, Pose(10.0, 0.0, 0.0), tuple(target_kps))
    others = tuple(Keyframe(10 + i, Pose(30.0 * (i + 1), -20.0, 0.0), tuple(rand_kps(n_keypoints))) for i in range(n_map))
    return Fixture(current, target, others)


def load_loopclosure_config(path) -> LoopClosureConfig:
    """TOML file whose keys are LoopClosureConfig field names."""
    from . import _toml

    path = os.fspath(path)
    try:
        return LoopClosureConfig(**_toml.read(path))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad loop-closure config: {exc}", None, path) from None

