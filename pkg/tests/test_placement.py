import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvspoof.errors import InputError, NoAcceptedSamples, ParseError, TargetNotFound
from rvspoof.placement import (
    Bounds,
    DetectorConfig,
    Objective,
    OptimizerConfig,
    Placement,
    PlacementLoss,
    Scene,
    TargetMatcher,
    brute_force_oracle,
    drone_template,
    estimate_gradient,
    format_scene,
    grid_search,
    load_scene,
    loss,
    optimize,
    optimize_placement,
    parse_scene,
    reference_detector,
    reference_scene,
    transform_object,
)

from . import oracles

FAST = OptimizerConfig(iterations=6, samples=4)


@pytest.fixture(scope="module")
def scene():
    return load_scene()


@pytest.fixture(scope="module")
def loss_fn(scene):
    return PlacementLoss(scene)


def block(center, n_side=4, pitch=0.2):
    g = np.stack(np.meshgrid(*(np.arange(n_side) * pitch,) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    return g - g.mean(axis=0) + np.asarray(center)


# transform


def test_identity_and_translation():
    t = drone_template()
    assert len(t) == 40
    np.testing.assert_allclose(transform_object(t, Placement()), t)
    np.testing.assert_allclose(transform_object(t, Placement(x=1.0)), t + [1.0, 0, 0])


def test_half_turn_of_symmetric_template_is_same_set():
    t = drone_template()
    out = transform_object(t, Placement(alpha=math.pi))
    key = lambda a: sorted(map(tuple, np.round(a, 6) + 0.0))  # noqa: E731
    assert key(out) == key(t)


def test_rotation_order():
    p = np.array([[1.0, 0.0, 0.0]])
    # X rotation first leaves the x-axis alone, then Z by pi/2 maps it to y
    out = transform_object(p, Placement(alpha=math.pi / 2, gamma=math.pi / 2))
    np.testing.assert_allclose(out, [[0.0, 1.0, 0.0]], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_transform_preserves_count_and_distances(vals):
    t = drone_template()
    out = transform_object(t, Placement(*vals))
    assert out.shape == t.shape
    np.testing.assert_allclose(np.linalg.norm(out[0] - out[1]), np.linalg.norm(t[0] - t[1]), atol=1e-9)


# detector


def test_detector_two_clusters():
    cloud = np.vstack([block((0, 0, 0), 4)[:60], block((10, 0, 0), 4)[:60]])
    boxes = reference_detector(cloud)
    assert len(boxes) == 2
    assert all(b.confidence == 1.0 for b in boxes)
    np.testing.assert_allclose(boxes[1].location, cloud[60:].mean(axis=0))


def test_detector_empty_and_small():
    assert reference_detector(np.zeros((0, 3))) == []
    assert reference_detector(block((0, 0, 0), 2)[:5]) == []  # confidence 0.1 < 0.2


def test_detector_agrees_with_union_find_oracle(scene):
    cloud = np.vstack([scene.points, transform_object(scene.template, Placement(x=0.9, y=0.4)) + scene.origin])
    boxes = reference_detector(cloud)
    groups = [g for g in oracles.voxel_clusters([tuple(p) for p in cloud], 0.5) if len(g) / 50 >= 0.2]
    expect = sorted(oracles.centroid(g) for g in groups)
    got = sorted(tuple(b.location) for b in boxes)
    np.testing.assert_allclose(got, expect)


# loss


def test_far_placement_leaves_detection_alone(scene):
    far = Scene(scene.points, scene.target, scene.template, anchor=(40.0, 40.0, 0.0))
    assert PlacementLoss(far)(Placement()) == 0.0


def test_merge_moves_centroid_by_hand_computation(scene):
    s = Placement(x=1.5, y=0.0, z=0.0)
    obj = transform_object(scene.template, s) + scene.origin
    cloud = [tuple(p) for p in np.vstack([scene.points, obj])]
    clean = oracles.centroid([tuple(p) for p in scene.points[:60]])
    merged = [g for g in oracles.voxel_clusters(cloud, 0.5) if len(g) >= 90][0]
    shift = oracles.centroid(merged)
    expected = sum((a - b) ** 2 for a, b in zip(shift, clean))
    assert expected > 0
    assert loss(reference_detector, scene.points, scene.template, s, scene.target) == pytest.approx(expected)


def test_loss_is_pure(loss_fn):
    s = Placement(0.7, -0.3, 0.1, 0.2, 0.0, -1.0)
    assert loss_fn(s) == loss_fn(s) == loss_fn(s.as_array())


def test_vanished_target_hits_cap():
    # a detector that only sees the clean scene: with any object the target disappears
    sc = reference_scene()
    det = lambda cloud: reference_detector(cloud) if len(cloud) == len(sc.points) else []  # noqa: E731
    fn = PlacementLoss(sc, det)
    assert fn(Placement()) == pytest.approx(Bounds().diagonal ** 2)


def test_target_not_found(scene):
    with pytest.raises(TargetNotFound):
        PlacementLoss(Scene(scene.points, TargetMatcher((50.0, 0.0, 0.0), 1.0), scene.template))
    with pytest.raises(TargetNotFound):
        PlacementLoss(Scene(np.zeros((0, 3)), scene.target, scene.template))


def test_boost_is_negated_suppress(scene):
    sup = PlacementLoss(scene, objective=Objective.SUPPRESS)
    boost = PlacementLoss(scene, objective=Objective.BOOST)
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = rng.uniform(Bounds().lo, Bounds().hi)
        assert boost(s) == -sup(s)


# gradient estimate


def test_constant_loss_estimate_is_scaled_mean_of_u():
    cfg = OptimizerConfig(samples=30, epsilon=0.1)
    g = estimate_gradient(lambda s: 2.0, np.zeros(6), cfg, np.random.default_rng(4))
    u = np.random.default_rng(4).uniform(-1, 1, size=(30, 6))
    np.testing.assert_allclose(g, (2.0 / 0.1) * u.mean(axis=0))


def test_gate_rejects_everything():
    cfg = OptimizerConfig(threshold=0.5, max_sample_attempts=50)
    with pytest.raises(NoAcceptedSamples):
        estimate_gradient(lambda s: 0.0, np.zeros(6), cfg, np.random.default_rng(0))


def test_estimate_divides_by_m_even_when_attempts_run_out():
    cfg = OptimizerConfig(samples=10, threshold=0.0, max_sample_attempts=10)
    rng = np.random.default_rng(2)
    g = estimate_gradient(lambda s: 1.0 if s[0] > 0 else 0.0, np.zeros(6), cfg, rng)
    u = np.random.default_rng(2).uniform(-1, 1, size=(10, 6))
    kept = u[u[:, 0] > 0]
    np.testing.assert_allclose(g, kept.sum(axis=0) / cfg.epsilon / 10)


def test_estimate_mean_tracks_true_gradient_on_quadratic():
    s0 = np.array([0.5, -1.0, 0.25, 1.0, 0.0, -0.5])
    cfg = OptimizerConfig(samples=100, epsilon=0.05)
    rng = np.random.default_rng(0)
    mean = np.mean([estimate_gradient(lambda s: float(s @ s), s0, cfg, rng) for _ in range(2000)], axis=0)
    # E[f(s + eps u) u] / eps = grad * E[u_k^2] = grad / 3 for U(-1, 1)
    np.testing.assert_allclose(mean, 2 * s0 / 3, atol=0.25)


# optimizer


def test_zero_iterations_returns_initial(loss_fn):
    res = optimize(loss_fn, OptimizerConfig(iterations=0, seed=5))
    assert res.placement == res.initial and res.history == []


def test_insensitive_detector_stays_at_zero(scene):
    clean = reference_detector(scene.points)
    res = optimize_placement(lambda cloud: clean, scene.points, scene.template, scene.target, FAST)
    assert res.history == [0.0] * FAST.iterations


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_history_monotone_bounded_reproducible(seed, per_sample):
    sc = reference_scene()
    cfg = OptimizerConfig(iterations=6, samples=4, seed=seed, per_sample_update=per_sample)
    a = optimize(PlacementLoss(sc), cfg)
    b = optimize(PlacementLoss(sc), cfg)
    assert a.history == b.history and a.placement == b.placement
    assert all(x <= y for x, y in zip(a.history, a.history[1:]))
    assert all(cfg.bounds.contains(p.as_array()) for p in a.trajectory + [a.placement, a.initial])


def test_config_validation():
    with pytest.raises(InputError):
        OptimizerConfig(samples=0)
    with pytest.raises(InputError):
        OptimizerConfig(epsilon=0)
    with pytest.raises(InputError):
        OptimizerConfig(samples=30, max_sample_attempts=10)
    with pytest.raises(InputError):
        Bounds(lo=(1, 0, 0, 0, 0, 0), hi=(0, 0, 0, 0, 0, 0))


# oracle


def test_degenerate_bounds_grid_is_identity(scene):
    b = Bounds((0,) * 6, (0,) * 6)
    s, val = brute_force_oracle(reference_detector, scene.points, scene.template, scene.target, b)
    assert s == Placement()
    assert val == loss(reference_detector, scene.points, scene.template, Placement(), scene.target, bounds=b)


def test_coarse_grid_finds_a_merge(loss_fn):
    s, val = grid_search(loss_fn, Bounds(), grid_step=1.5, angle_step=math.pi)
    assert val > 0


def test_grid_search_rejects_bad_step(loss_fn):
    with pytest.raises(InputError):
        grid_search(loss_fn, Bounds(), grid_step=0)


# scene files


def test_scene_round_trip(scene):
    again = parse_scene(format_scene(scene))
    np.testing.assert_allclose(again.points, scene.points)
    assert again.target == scene.target


def test_shipped_scene_is_reference(scene):
    np.testing.assert_allclose(scene.points, reference_scene().points)
    assert len(scene.points) == 90


def test_scene_parse_errors():
    with pytest.raises(ParseError) as err:
        parse_scene("target 0 0 0\n1 2\n")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_scene("1 2 3\n")
    with pytest.raises(ParseError):
        parse_scene("target 0 0 0\ntemplate cube\n")


def test_detector_config_threshold():
    pts = block((0, 0, 0), 3)  # 27 points
    assert reference_detector(pts, DetectorConfig(n_ref=50, c_min=0.6)) == []
    assert len(reference_detector(pts, DetectorConfig(n_ref=50, c_min=0.5))) == 1
