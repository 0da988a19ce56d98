"""Fake a loop closure by painting keypoints that match a stored keyframe.

Run: python demos/04_loop_closure.py
"""
from rvspoof.errors import BudgetExhausted
from rvspoof.loopclosure import LoopClosureConfig, detect_loop_closure, inject_features, load_fixture, match_keyframes, relocalize

fx = load_fixture()
cfg = LoopClosureConfig()
m = match_keyframes(fx.current, fx.target, cfg)
print(f"current frame vs keyframe {fx.target.id}: {m.similarity} matches in {m.consistent_groups} angle groups")
print("closure before the attack:", detect_loop_closure(fx.current, fx.db, cfg))

# Grow the budget until the detector accepts the spoofed frame.
for budget in (5, 10, 20, 22, 34):
    try:
        frame, injected = inject_features(fx.current, fx.target, cfg, budget, fx.db)
    except BudgetExhausted as exc:
        print(f"budget {budget:>2}: not enough, similarity reached {exc.similarity}")
        continue
    m = match_keyframes(frame, fx.target, cfg)
    print(f"budget {budget:>2}: closure with {len(injected)} injected keypoints ({m.similarity} matches, {m.consistent_groups} groups)")
    break

print(f"pose before: {fx.current.pose}")
print(f"pose after relocalization: {relocalize(fx.current.pose, fx.target)}")
