"""Write a scenario from scratch: hide a stalled car from both LiDAR and camera.

Run: python demos/05_custom_scenario.py
"""
from rvspoof.sim import parse_scenario, parse_spoofs, run_scenario

scenario = parse_scenario(
    """
    name = "car_hidden_obstacle"
    vehicle = "car"
    sensors = ["GPS", "IMU", "LiDAR", "Camera"]
    steps = 120
    start = { x = 0, y = 0, heading = 0, speed = 10 }
    destination = [120, 0]
    grid = { bounds = [-10, -10, 130, 10], cell = 2 }

    [[obstacles]]
    id = "stalled"
    class = "vehicle"
    position = [60, 0]
    extent = 1.0

    [[lanes]]
    centerline = [[-10, 0], [200, 0]]
    half_width = 2.0
    """
)

# Spoof windows are in seconds. The LiDAR erase disc is in the vehicle frame,
# so a wide disc ahead keeps covering the car as the vehicle closes in.
spoofs = parse_spoofs(
    """
    LidarErase start=0 end=12 center=15,0 radius=15
    CameraObjectErase start=0 end=12 id=stalled
    """
)

trace, report = run_scenario(scenario)
print("clean:   ", report.line(), f"stopped at x={trace.steps[-1].truth.x:.1f}")
trace, report = run_scenario(scenario, spoofs)
print("attacked:", report.line())
hit = trace.steps[report.evidence[0]]
print(f"impact at t={hit.t:.1f}s, speed {hit.truth.speed:.1f} m/s, detections that step: {len(hit.est.detected_objects)}")
