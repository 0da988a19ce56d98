"""Label a finished trace with a hazardous outcome and the attack path that produced it."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..flows import AttackPath
from .world import TRANSFORMS, wrap

OUTCOMES = (
    "collision",
    "destabilized",
    "forced_landing",
    "traffic_violation",
    "off_road",
    "wrong_destination",
    "emergency_stop",
)
ENVIRONMENT_OUTCOMES = ("collision", "emergency_stop", "traffic_violation")


@dataclass(frozen=True)
class HazardReport:
    outcome: str | None
    realized_path: AttackPath | None
    evidence: tuple  # step indices supporting the outcome
    detail: str = ""
    blur_steps: tuple = ()
    roi_steps: tuple = ()

    def line(self) -> str:
        ev = ",".join(str(i) for i in self.evidence[:8]) + ("..." if len(self.evidence) > 8 else "")
        path = self.realized_path.value if self.realized_path else "none"
        return f"outcome={self.outcome or 'none'} path={path} evidence={ev or '-'}"


def spoof_target(kind: str) -> str:
    return TRANSFORMS[kind].target


def _collisions(trace):
    p = trace.scenario.params
    extents = {o.id: o.extent for o in trace.scenario.environment.obstacles}
    hits = []
    for s in trace.steps:
        for oid, ox, oy in s.obstacles:
            if math.hypot(ox - s.truth.x, oy - s.truth.y) < p.vehicle_radius + extents[oid]:
                hits.append(s.index)
                break
    return hits


def _destabilized(trace):
    p = trace.scenario.params
    sat = np.array([abs(s.truth.angular_rate) >= p.omega_max - 1e-9 for s in trace.steps], dtype=int)
    w = p.destabilized_window
    if len(sat) < w:
        return []
    counts = np.convolve(sat, np.ones(w, dtype=int), mode="valid")
    return [int(i) + w - 1 for i in np.nonzero(counts >= p.destabilized_count)[0]]


def _forced_landing(trace):
    env = trace.scenario.environment
    if trace.scenario.vehicle != "drone":
        return []
    return [s.index for s in trace.steps if s.control.discrete == "land" and not env.in_no_fly_zone(s.truth.x, s.truth.y)]


def _crosses(p0, p1, a, b) -> bool:
    def orient(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])

    d1, d2 = orient(a, b, p0), orient(a, b, p1)
    d3, d4 = orient(p0, p1, a), orient(p0, p1, b)
    # half-open so a vehicle stepping exactly onto the line is counted once
    return ((d1 <= 0 < d2) or (d2 < 0 <= d1)) and d3 * d4 <= 0


def _traffic_violations(trace):
    sigs = [s for s in trace.scenario.environment.signals if s.stop_line is not None]
    hits = []
    for a, b in zip(trace.steps, trace.steps[1:]):
        for sig in sigs:
            if sig.state_at(a.t) == "red" and _crosses(a.truth.position, b.truth.position, *sig.stop_line):
                # only the approach direction counts: the signal faces the crossing vehicle
                heading_to_sig = math.atan2(sig.position[1] - a.truth.y, sig.position[0] - a.truth.x)
                if abs(wrap(heading_to_sig - a.truth.heading)) < math.pi / 2:
                    hits.append(b.index)
    return hits


def _off_road(trace):
    lanes = trace.scenario.environment.lanes
    if not lanes:
        return []
    return [s.index for s in trace.steps if all(abs(ln.project((s.truth.x, s.truth.y))[0]) > ln.half_width for ln in lanes)]


def _wrong_destination(trace):
    sc = trace.scenario
    for s in trace.steps:
        if s.control.discrete == "park":
            d = math.hypot(s.truth.x - sc.destination[0], s.truth.y - sc.destination[1])
            return [s.index] if d > sc.params.destination_tolerance else []
    return []


def _emergency_stops(trace):
    p = trace.scenario.params
    extents = {o.id: o.extent for o in trace.scenario.environment.obstacles}
    hits = []
    for s in trace.steps:
        if s.control.discrete != "hard_brake":
            continue
        c, sn = math.cos(s.truth.heading), math.sin(s.truth.heading)
        real = False
        for oid, ox, oy in s.obstacles:
            dx, dy = ox - s.truth.x, oy - s.truth.y
            lon, lat = c * dx + sn * dy, -sn * dx + c * dy
            ext = extents[oid]
            # one body radius of slack: LiDAR sees only the near face, so perceived centres sit short
            if -ext <= lon <= p.d_safe + p.vehicle_radius + ext and abs(lat) <= p.corridor_half_width + ext:
                real = True
                break
        if not real:
            hits.append(s.index)
    return hits


DETECTORS = {
    "collision": _collisions,
    "destabilized": _destabilized,
    "forced_landing": _forced_landing,
    "traffic_violation": _traffic_violations,
    "off_road": _off_road,
    "wrong_destination": _wrong_destination,
    "emergency_stop": _emergency_stops,
}


def _path_for(outcome, kinds, blur, roi):
    targets = {spoof_target(k) for k in kinds}
    if "mission" in targets:
        return AttackPath.P5
    if outcome in ENVIRONMENT_OUTCOMES:
        if "environment" in targets:
            return AttackPath.P4
        if "operation" in targets:
            if blur:
                return AttackPath.P6
            if roi:
                return AttackPath.P7
    if outcome == "destabilized":
        return AttackPath.P1
    if outcome == "forced_landing":
        return AttackPath.P2
    if outcome in ("wrong_destination", "off_road"):
        if "GpsShift" in kinds:
            return AttackPath.P3
        if "environment" in targets:
            return AttackPath.P4
    # fall back on what was spoofed
    if "environment" in targets:
        return AttackPath.P4
    if "ImuBias" in kinds:
        return AttackPath.P1
    if "GpsShift" in kinds:
        return AttackPath.P3
    return None


def classify_outcome(trace, spoofs=None) -> HazardReport:
    """First outcome in precedence order, and the attack path behind it.

    The path is attributed to the spoofs that were active at some step of the
    trace; passing ``spoofs`` restricts attribution to those specs.
    """
    kinds = sorted({k for s in trace.steps for k in s.spoofs})
    if spoofs is not None:
        kinds = sorted(set(kinds) & {s.kind for s in spoofs})
    blur = tuple(s.index for s in trace.steps if s.blurred and s.spoofs)
    roi = tuple(s.index for s in trace.steps if s.signal_seen is not None and s.signal_seen != s.signal_governing)
    for outcome in OUTCOMES:
        hits = DETECTORS[outcome](trace)
        if hits:
            path = _path_for(outcome, kinds, blur, roi) if kinds else None
            return HazardReport(outcome, path, tuple(hits), f"spoofs={'+'.join(kinds) or '-'}", blur, roi)
    return HazardReport(None, None, (), "", blur, roi)


def run_scenario(scenario, spoofs=(), seed: int = 0):
    """Run the loop and classify it: (Trace, HazardReport)."""
    from .loop import run_loop

    trace = run_loop(scenario, spoofs, seed)
    return trace, classify_outcome(trace, spoofs)


def trace_text(trace, report: HazardReport) -> str:
    return trace.text() + report.line() + "\n"
