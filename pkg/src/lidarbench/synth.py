"""Deterministic synthetic scenes and spinning-LiDAR scans.

Scenes are bounded rectangles (ground, walls) plus axis-aligned boxes
(buildings, vehicles). Scans are ray-cast per (ring, azimuth) bin from a
sensor pose; points come back in the sensor frame, ring-major and in azimuth
order within each ring, so the feature extractor can treat them as a real
organized sweep. All randomness flows through a counter-based generator keyed
on (scene seed, frame index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .evaluation import LABEL_BUS, LABEL_CAR, LABEL_OTHER, LabelSet, SkyMask
from .geometry import Pose, PointCloud, se3_compose, se3_exp
from .trajectory import Trajectory


@dataclass
class SensorModel:
    """Spinning scanner: 32 rings over an asymmetric 40 degree vertical fan."""

    ring_count: int = 32
    vertical_min_deg: float = -25.0
    vertical_max_deg: float = 15.0
    azimuth_resolution_deg: float = 0.4
    max_range: float = 80.0
    range_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.ring_count < 2:
            raise ValueError("need at least 2 rings")
        if self.azimuth_resolution_deg <= 0.0 or self.max_range <= 0.0:
            raise ValueError("resolutions and range must be positive")

    @property
    def ring_elevations_deg(self) -> np.ndarray:
        return np.linspace(self.vertical_min_deg, self.vertical_max_deg, self.ring_count)

    @property
    def n_azimuth(self) -> int:
        return int(round(360.0 / self.azimuth_resolution_deg))


@dataclass
class Rect:
    """Bounded planar patch: origin + s*u + t*v for s, t in [0, 1]."""

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    label: int = LABEL_OTHER

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.u = np.asarray(self.u, dtype=np.float64).reshape(3)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(3)


@dataclass
class Box:
    """Axis-aligned box; velocity shifts it per frame to emulate traffic."""

    min_corner: np.ndarray
    max_corner: np.ndarray
    label: int = LABEL_OTHER
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.min_corner = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        self.max_corner = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=np.float64).reshape(3)
        if (self.max_corner <= self.min_corner).any():
            raise ValueError("box must have positive extent on every axis")


@dataclass
class SceneSpec:
    rects: list[Rect] = field(default_factory=list)
    boxes: list[Box] = field(default_factory=list)
    seed: int = 0


def _rng_for_frame(seed: int, frame_index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, frame_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _ray_directions(sensor: SensorModel):
    """Unit directions per (ring, azimuth) bin plus ring ids, ring-major."""
    elev = np.radians(sensor.ring_elevations_deg)
    az = np.radians(np.arange(sensor.n_azimuth) * sensor.azimuth_resolution_deg)
    ce, se = np.cos(elev), np.sin(elev)
    ca, sa = np.cos(az), np.sin(az)
    dirs = np.empty((sensor.ring_count, sensor.n_azimuth, 3))
    dirs[:, :, 0] = ce[:, None] * ca[None, :]
    dirs[:, :, 1] = ce[:, None] * sa[None, :]
    dirs[:, :, 2] = se[:, None] * np.ones_like(ca)[None, :]
    rings = np.repeat(np.arange(sensor.ring_count, dtype=np.int32), sensor.n_azimuth)
    return dirs.reshape(-1, 3), rings


def _intersect_rect(origin, dirs, rect: Rect):
    n = np.cross(rect.u, rect.v)
    denom = dirs @ n
    t = np.full(len(dirs), np.inf)
    ok = np.abs(denom) > 1e-12
    t_ok = ((rect.origin - origin) @ n) / denom[ok]
    hit = origin + t_ok[:, None] * dirs[ok]
    rel = hit - rect.origin
    s1 = (rel @ rect.u) / (rect.u @ rect.u)
    s2 = (rel @ rect.v) / (rect.v @ rect.v)
    good = (t_ok > 1e-6) & (s1 >= 0.0) & (s1 <= 1.0) & (s2 >= 0.0) & (s2 <= 1.0)
    vals = np.where(good, t_ok, np.inf)
    t[ok] = vals
    return t


def _intersect_box(origin, dirs, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    # axis-parallel rays: valid only while origin sits inside that slab
    par = np.abs(dirs) < 1e-15
    inside = (origin >= lo) & (origin <= hi)
    tmin = np.where(par, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(par, np.where(inside, np.inf, -np.inf), tmax)
    tn = tmin.max(axis=1)
    tf = tmax.min(axis=1)
    ok = (tn <= tf) & (tn > 1e-6)
    return np.where(ok, tn, np.inf)


def simulate_scan(
    scene: SceneSpec,
    pose: Pose,
    sensor: SensorModel,
    frame_index: int = 0,
    timestamp: float | None = None,
):
    """Ray-cast one scan from `pose`. Returns (cloud, labels).

    Points are expressed in the sensor frame; each carries its ring id and
    the class of the object it hit. Boxes with a velocity are advanced by
    velocity * frame_index before casting.
    """
    dirs_s, rings = _ray_directions(sensor)
    dirs_w = dirs_s @ pose.rotation.T
    o = pose.translation
    best_t = np.full(len(dirs_w), np.inf)
    best_label = np.zeros(len(dirs_w), dtype=np.int32)
    for rect in scene.rects:
        t = _intersect_rect(o, dirs_w, rect)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_label = np.where(closer, rect.label, best_label)
    for box in scene.boxes:
        shift = box.velocity * frame_index
        t = _intersect_box(o, dirs_w, box.min_corner + shift, box.max_corner + shift)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_label = np.where(closer, box.label, best_label)
    hit = best_t <= sensor.max_range
    t = best_t[hit]
    if sensor.range_noise_sigma > 0.0:
        rng = _rng_for_frame(scene.seed, frame_index)
        t = t + rng.normal(0.0, sensor.range_noise_sigma, size=len(t))
    xyz_sensor = dirs_s[hit] * t[:, None]
    cloud = PointCloud(
        xyz=xyz_sensor,
        ring=rings[hit],
        label=best_label[hit],
        frame_id="sensor",
        timestamp=float(timestamp) if timestamp is not None else 0.1 * frame_index,
    )
    return cloud, LabelSet(best_label[hit])


def simulate_sequence(scene: SceneSpec, traj: Trajectory, sensor: SensorModel):
    """Scans plus labels along a trajectory, one frame per pose."""
    out = []
    for k, frame in enumerate(traj):
        out.append(
            simulate_scan(scene, frame.pose_world, sensor, k, frame.timestamp)
        )
    return out


def generate_trajectory(
    kind: str,
    steps: int,
    step_translation=(0.0, 0.0, 0.0),
    yaw_deg_per_step: float = 0.0,
    dt: float = 0.1,
) -> Trajectory:
    """Ground-truth pose sequence: `steps` body-frame increments from identity
    (steps + 1 poses). kinds: static, constant_velocity, turn."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    v = np.asarray(step_translation, dtype=np.float64)
    if kind == "static":
        xi = np.zeros(6)
    elif kind == "constant_velocity":
        xi = np.concatenate([v, np.zeros(3)])
    elif kind == "turn":
        xi = np.concatenate([v, [0.0, 0.0, math.radians(yaw_deg_per_step)]])
    else:
        raise ValueError(f"unknown trajectory kind: {kind!r}")
    step = se3_exp(xi)
    poses = [Pose.identity()]
    for _ in range(steps):
        poses.append(se3_compose(poses[-1], step))
    return Trajectory.from_poses(poses, dt=dt)


_CAR_SIZE = np.array([4.5, 1.8, 1.5])
_BUS_SIZE = np.array([12.0, 2.5, 3.0])


def canyon_scene(
    urbanization: str = "low",
    dynamic_count: int = 0,
    seed: int = 0,
    street_length: float = 60.0,
    wall_offset: float = 10.0,
):
    """Street corridor with building walls and optional moving vehicles.

    Wall height follows the urbanization level; the matching skymask is
    computed analytically from the corridor center at ground level
    (elevation = atan(height / distance-to-wall) per 1 degree azimuth).
    Returns (scene, skymask).
    """
    if urbanization not in ("low", "high"):
        raise ValueError("urbanization must be 'low' or 'high'")
    height = 5.0 if urbanization == "low" else 25.0
    L, off = street_length, wall_offset
    rects = [
        Rect(origin=(-L / 2, -off - 2.0, 0.0), u=(L, 0, 0), v=(0, 2 * off + 4.0, 0)),
        Rect(origin=(-L / 2, off, 0.0), u=(L, 0, 0), v=(0, 0, height)),
        Rect(origin=(-L / 2, -off, 0.0), u=(L, 0, 0), v=(0, 0, height)),
    ]
    boxes = []
    rng = _rng_for_frame(seed, 0x5CE4E)
    for i in range(dynamic_count):
        size = _BUS_SIZE if i % 4 == 3 else _CAR_SIZE
        label = LABEL_BUS if i % 4 == 3 else LABEL_CAR
        cx = rng.uniform(-L / 2 + 8.0, L / 2 - 8.0)
        lane = rng.choice([-4.0, -2.0, 2.0, 4.0])
        speed = rng.uniform(0.8, 1.5) * (1.0 if lane > 0 else -1.0)
        lo = np.array([cx - size[0] / 2, lane - size[1] / 2, 0.0])
        boxes.append(
            Box(lo, lo + size, label=label, velocity=np.array([speed, 0.0, 0.0]))
        )
    scene = SceneSpec(rects=rects, boxes=boxes, seed=seed)

    az = np.arange(360.0)
    elev = np.zeros(360)
    for k, a in enumerate(np.radians(az)):
        s = math.sin(a)
        if abs(s) < 1e-12:
            continue
        d = off / abs(s)
        x_hit = d * math.cos(a)
        if -L / 2 <= x_hit <= L / 2:
            elev[k] = math.degrees(math.atan2(height, d))
    return scene, SkyMask(az, elev)
