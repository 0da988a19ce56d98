"""Move a detected object by placing a small drone next to it, using only detector outputs.

The detector is a voxel clusterer that reports one box per cluster. Put the
drone close enough to the target and the two merge, shifting the reported box.
The optimizer never sees gradients: it probes the detector at random nearby
placements and takes sign steps.

Run: python demos/03_placement_attack.py
"""
import numpy as np

from rvspoof.placement import OptimizerConfig, PlacementLoss, estimate_gradient, grid_search, load_scene, optimize

scene = load_scene()
loss_fn = PlacementLoss(scene)
print(f"scene: {len(scene.points)} points, target near {tuple(scene.target.location)}")

res = optimize(loss_fn, OptimizerConfig(seed=0))
print(f"optimizer, seed 0: loss {res.loss:.3f} at {res.placement}")
print("   best-so-far:", " ".join(f"{v:.2f}" for v in res.history[::5]))

# The grid oracle tries every 0.25 m translation and quarter-turn rotation.
oracle_s, oracle = grid_search(loss_fn, OptimizerConfig().bounds, 0.25)
print(f"grid oracle:       loss {oracle:.3f} at {oracle_s}")
print(f"ratio {res.loss / oracle:.2f}")

# Why the optimizer wanders: the estimate multiplies the raw loss by a random
# direction, so for small epsilon the loss value itself dwarfs its slope.
s0 = np.ones(6)
for m in (5, 50, 500):
    cfg = OptimizerConfig(samples=m, epsilon=0.01, max_sample_attempts=max(200, m))
    cos = []
    for seed in range(100):
        g = estimate_gradient(lambda s: float(s @ s), s0, cfg, np.random.default_rng(seed))
        cos.append(g @ s0 / (np.linalg.norm(g) * np.linalg.norm(s0)))
    print(f"quadratic, m={m:<3}: mean cosine to the true gradient {np.mean(cos):+.3f}")

# The same samples taken one step at a time fare better on the real scene.
res = optimize(loss_fn, OptimizerConfig(seed=0, per_sample_update=True))
print(f"per-sample updates, seed 0: loss {res.loss:.3f} (ratio {res.loss / oracle:.2f})")
