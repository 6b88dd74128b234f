"""Trajectory containers shared by the pipeline, evaluation, and file IO."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose


@dataclass
class FrameResult:
    """One pipeline frame: world pose plus per-stage timing and flags."""

    frame_index: int
    timestamp: float
    pose_world: Pose
    odometry_ms: float = 0.0
    mapping_ms: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.odometry_ms < 0.0 or self.mapping_ms < 0.0:
            raise ValueError("stage times must be >= 0")


@dataclass
class Trajectory:
    """Ordered frames with strictly increasing timestamps."""

    frames: list[FrameResult]

    def __post_init__(self):
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames])

    @property
    def poses(self) -> list[Pose]:
        return [f.pose_world for f in self.frames]

    @staticmethod
    def from_poses(poses, timestamps=None, dt: float = 0.1) -> "Trajectory":
        poses = list(poses)
        if timestamps is None:
            timestamps = [i * dt for i in range(len(poses))]
        frames = [
            FrameResult(frame_index=i, timestamp=float(t), pose_world=p)
            for i, (t, p) in enumerate(zip(timestamps, poses))
        ]
        return Trajectory(frames)
