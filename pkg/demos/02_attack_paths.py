"""Replay the seven shipped attack scenarios, each once clean and once spoofed.

Each scenario is a small closed loop: sensors render the true world, spoofs
edit the frames, and the vehicle's own perception, planning and control react.
The hazard classifier then names the outcome and the attack path it came from.

Run: python demos/02_attack_paths.py
"""
from rvspoof.sim import load_shipped, run_scenario, shipped_scenarios
from rvspoof.sim.world import format_spoof

for name in shipped_scenarios():
    scenario, spoofs = load_shipped(name)
    _, clean = run_scenario(scenario)
    trace, attacked = run_scenario(scenario, spoofs)
    print(f"{name}")
    print(f"   {scenario.description}")
    for s in spoofs:
        print(f"   spoof:    {format_spoof(s)}")
    print(f"   clean:    {clean.line()}")
    print(f"   attacked: {attacked.line()}")
    print()

# A closer look at the phantom obstacle: the vehicle brakes for returns that only exist in its LiDAR frame.
scenario, spoofs = load_shipped("p4_car_phantom_obstacle")
trace, report = run_scenario(scenario, spoofs)
first = report.evidence[0]
print("trace around the first phantom brake:")
for line in trace.lines()[first : first + 4]:  # line 0 is the header
    print("  ", line)
