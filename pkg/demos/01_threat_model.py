"""Walk the action-flow graph and the attack-vector catalog built on top of it.

Run: python demos/01_threat_model.py
"""
from collections import Counter

from rvspoof.catalog import Feasibility, Status, coverage_report, load_catalog, query_vectors
from rvspoof.flows import Sensor, build_reference_graph, enumerate_action_flows

graph = build_reference_graph()
print(f"{len(graph.nodes)} robotic functions, {len(graph.edges)} edges")

# Every sensor-to-controller path is a place where spoofed data can travel.
flows = enumerate_action_flows(graph, list(Sensor))
print(f"{len(flows)} action flows")
for f in flows[:4]:
    print("  ", f.to_line())
print("   ...")

# Flows that share a function sequence share a pattern, and with it the attacks that apply.
by_pattern = Counter(f.pattern for f in flows)
print("flows per pattern:", ", ".join(f"{p}={n}" for p, n in sorted(by_pattern.items(), key=lambda kv: int(kv[0][2:]))))

# Two-round flows: spoof the pose first (GPS/IMU), then let the perception stack mis-read the world.
two_round = [f for f in flows if f.rounds == 2]
print(f"{len(two_round)} two-round flows, e.g. {two_round[0].to_line()}")

# Crossing patterns with spoofer techniques gives the catalog.
catalog = load_catalog()
report = coverage_report(catalog)
print()
print(report.summary_line())
print("unexplored by feasibility:", {str(c): report.by_class.get(str(c), 0) for c in Feasibility})

# The cheap, portable, passive vectors nobody has tried yet.
hits = query_vectors(catalog, status=Status.UNEXPLORED, predicate=lambda r: r.spoofer.cost == "$" and r.operation.exposure == "passive")
print(f"\n{len(hits)} unexplored passive vectors under $100:")
for r in hits[:6]:
    print(f"   {r.pattern:<5} {r.attack:<36} {r.sensor.value:<10} {r.technique}")
