"""Shared synthetic scenes: every registration test recovers motions between
scans of the same rigid world, so ground truth is exact by construction."""

import numpy as np
import pytest

from lidarbench.geometry import Pose, rotation_angle, se3_compose, se3_inverse, so3_exp
from lidarbench.synth import Box, Rect, SceneSpec, SensorModel, simulate_scan

TEST_SENSOR = SensorModel(ring_count=16, azimuth_resolution_deg=1.0, max_range=30.0)


def three_plane_scene() -> SceneSpec:
    """10 m corner: ground plus two walls, mutually orthogonal."""
    return SceneSpec(
        rects=[
            Rect(origin=(-5.0, -5.0, 0.0), u=(10, 0, 0), v=(0, 10, 0)),
            Rect(origin=(5.0, -5.0, 0.0), u=(0, 10, 0), v=(0, 0, 5)),
            Rect(origin=(-5.0, 5.0, 0.0), u=(10, 0, 0), v=(0, 0, 5)),
        ]
    )


def corridor_scene() -> SceneSpec:
    """Two parallel walls, ground, and a few boxes for yaw observability."""
    return SceneSpec(
        rects=[
            Rect(origin=(-30.0, -6.0, 0.0), u=(60, 0, 0), v=(0, 12, 0)),
            Rect(origin=(-30.0, 6.0, 0.0), u=(60, 0, 0), v=(0, 0, 4)),
            Rect(origin=(-30.0, -6.0, 0.0), u=(60, 0, 0), v=(0, 0, 4)),
            Rect(origin=(10.0, -6.0, 0.0), u=(0, 12, 0), v=(0, 0, 4)),
        ],
        boxes=[
            Box((3.0, 2.0, 0.0), (5.0, 4.0, 2.0)),
            Box((-4.0, -5.0, 0.0), (-2.0, -3.0, 1.5)),
            Box((7.0, -4.5, 0.0), (8.5, -3.0, 2.5)),
        ],
    )


def ground_poles_scene() -> SceneSpec:
    """Flat ground plus thin vertical boxes (poles)."""
    poles = []
    for x, y in [(4, 2), (6, -3), (-3, 4), (-5, -2), (2, -6), (-6, 5), (8, 4)]:
        poles.append(Box((x - 0.15, y - 0.15, 0.0), (x + 0.15, y + 0.15, 3.0)))
    return SceneSpec(
        rects=[Rect(origin=(-20.0, -20.0, 0.0), u=(40, 0, 0), v=(0, 40, 0))],
        boxes=poles,
    )


@pytest.fixture(scope="session")
def three_plane_scan():
    pose = Pose.from_translation([-1.5, -1.5, 1.6])
    cloud, _ = simulate_scan(three_plane_scene(), pose, TEST_SENSOR)
    return cloud


@pytest.fixture(scope="session")
def corridor_scan():
    pose = Pose.from_translation([-5.0, 0.0, 1.8])
    cloud, _ = simulate_scan(corridor_scene(), pose, TEST_SENSOR)
    return cloud


def random_small_pose(rng, max_trans: float, max_angle_deg: float) -> Pose:
    w = rng.normal(size=3)
    w *= np.radians(rng.uniform(0.0, max_angle_deg)) / np.linalg.norm(w)
    t = rng.normal(size=3)
    t *= rng.uniform(0.0, max_trans) / np.linalg.norm(t)
    return Pose(so3_exp(w), t)


def pose_error(estimate: Pose, truth: Pose):
    """(translation error meters, rotation error degrees)."""
    d = se3_compose(se3_inverse(truth), estimate)
    return float(np.linalg.norm(d.translation)), float(
        np.degrees(rotation_angle(d.rotation))
    )
