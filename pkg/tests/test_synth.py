import numpy as np
import pytest

from lidarbench.evaluation import LABEL_OTHER, skymask_mea
from lidarbench.geometry import Pose, rotation_angle
from lidarbench.synth import (
    Box,
    Rect,
    SceneSpec,
    SensorModel,
    canyon_scene,
    generate_trajectory,
    simulate_scan,
)

SENSOR = SensorModel(ring_count=16, azimuth_resolution_deg=2.0, max_range=50.0)


def big_ground(half=500.0):
    return Rect(origin=(-half, -half, 0.0), u=(2 * half, 0, 0), v=(0, 2 * half, 0))


class TestSimulateScan:
    def test_flat_ground_height(self):
        scene = SceneSpec(rects=[big_ground()])
        pose = Pose.from_translation([0, 0, 2.0])
        cloud, _ = simulate_scan(scene, pose, SENSOR)
        assert len(cloud) > 0
        assert np.abs(cloud.xyz[:, 2] + 2.0).max() < 1e-9

    def test_single_wall(self):
        wall = Rect(origin=(10.0, -50.0, -50.0), u=(0, 100, 0), v=(0, 0, 100))
        cloud, _ = simulate_scan(SceneSpec(rects=[wall]), Pose.identity(), SENSOR)
        assert len(cloud) > 0
        assert np.abs(cloud.xyz[:, 0] - 10.0).max() < 1e-9

    def test_seed_determinism(self):
        scene = SceneSpec(rects=[big_ground()], seed=123)
        sensor = SensorModel(
            ring_count=16, azimuth_resolution_deg=2.0, range_noise_sigma=0.05
        )
        pose = Pose.from_translation([0, 0, 2.0])
        a, _ = simulate_scan(scene, pose, sensor, frame_index=3)
        b, _ = simulate_scan(scene, pose, sensor, frame_index=3)
        assert a.xyz.tobytes() == b.xyz.tobytes()
        c, _ = simulate_scan(scene, pose, sensor, frame_index=4)
        assert a.xyz.tobytes() != c.xyz.tobytes()

    def test_ring_ordering(self):
        scene = SceneSpec(rects=[big_ground()])
        cloud, _ = simulate_scan(scene, Pose.from_translation([0, 0, 2.0]), SENSOR)
        assert (np.diff(cloud.ring) >= 0).all()
        for r in np.unique(cloud.ring):
            pts = cloud.xyz[cloud.ring == r]
            az = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
            assert (np.diff(az) > 0).all()

    def test_empty_scene_allowed(self):
        cloud, labels = simulate_scan(SceneSpec(), Pose.identity(), SENSOR)
        assert len(cloud) == 0
        assert labels.n_total == 0

    def test_moving_box(self):
        box = Box((5.0, -1, 0), (7.0, 1, 2), label=1, velocity=(1.0, 0, 0))
        scene = SceneSpec(rects=[], boxes=[box])
        c0, _ = simulate_scan(scene, Pose.from_translation([0, 0, 1.0]), SENSOR, 0)
        c5, _ = simulate_scan(scene, Pose.from_translation([0, 0, 1.0]), SENSOR, 5)
        assert c0.xyz[:, 0].min() < c5.xyz[:, 0].min()


class TestGenerateTrajectory:
    def test_static(self):
        t = generate_trajectory("static", 10)
        assert len(t) == 11
        for p in t.poses:
            assert np.abs(p.translation).max() == 0.0
            assert rotation_angle(p.rotation) == 0.0

    def test_constant_velocity(self):
        t = generate_trajectory("constant_velocity", 5, step_translation=(1, 0, 0))
        np.testing.assert_allclose(t.poses[-1].translation, [5, 0, 0], atol=1e-12)

    def test_turn(self):
        t = generate_trajectory("turn", 9, yaw_deg_per_step=10.0)
        final = t.poses[-1].rotation
        assert abs(np.degrees(rotation_angle(final)) - 90.0) < 1e-9

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            generate_trajectory("wiggle", 3)


class TestCanyonScene:
    def test_skymask_analytic(self):
        _, mask = canyon_scene("low", 0, seed=1)
        # perpendicular to the wall: elevation = atan(height / offset)
        assert abs(mask.elevation_deg[90] - np.degrees(np.arctan(0.5))) < 1e-9
        # along the street: open sky
        assert mask.elevation_deg[0] == 0.0

    def test_no_dynamics_all_other(self):
        scene, _ = canyon_scene("low", 0, seed=2)
        cloud, labels = simulate_scan(
            scene, Pose.from_translation([0, 0, 1.8]), SENSOR
        )
        assert labels.n_car + labels.n_bus == 0
        assert (cloud.label == LABEL_OTHER).all()

    def test_high_more_urban_than_low(self):
        _, low = canyon_scene("low", 0, seed=3)
        _, high = canyon_scene("high", 0, seed=3)
        assert skymask_mea(high) > skymask_mea(low)

    def test_dynamic_objects_visible(self):
        scene, _ = canyon_scene("low", 8, seed=4)
        _, labels = simulate_scan(scene, Pose.from_translation([0, 0, 1.8]), SENSOR)
        assert labels.n_car + labels.n_bus > 0

    def test_points_on_surfaces(self):
        scene, _ = canyon_scene("low", 0, seed=5)
        pose = Pose.from_translation([0, 0, 1.8])
        cloud, _ = simulate_scan(scene, pose, SENSOR)
        world = pose.apply(cloud.xyz)
        on_ground = np.abs(world[:, 2]) < 1e-9
        on_wall = np.abs(np.abs(world[:, 1]) - 10.0) < 1e-9
        assert (on_ground | on_wall).all()
