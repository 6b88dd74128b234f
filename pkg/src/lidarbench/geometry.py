"""SE(3) poses, their exponential/logarithm maps, and point cloud primitives.

Conventions used everywhere in the package:
  * a pose is a rotation matrix R plus translation t, acting as p' = R p + t
  * a twist is a flat 6-vector [vx vy vz wx wy wz] (translation part first)
  * clouds store coordinates as an (N, 3) float64 array, one row per point
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRotationError, EmptyInputError

# below this rotation angle log/exp switch to their Taylor expansions
SMALL_ANGLE = 1e-9
# log() refuses rotations whose angle is within this margin of pi
PI_MARGIN = 1e-3
# compose() re-orthonormalizes when R'R - I drifts beyond this
ORTHO_DRIFT = 1e-12


def skew(w):
    """3x3 antisymmetric matrix such that skew(w) @ v == np.cross(w, v)."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def _project_rotation(R):
    """Nearest rotation matrix in the Frobenius sense (det fixed to +1)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (3x3, det +1) and translation (3,) in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(R).all() and np.isfinite(t).all()):
            raise ValueError("pose entries must be finite")
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > 1e-6 or np.linalg.det(R) < 0.0:
            raise ValueError(f"rotation not orthonormal (drift {err:.3e})")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(t) -> "Pose":
        return Pose(np.eye(3), np.asarray(t, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) block of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def se3_compose(a: Pose, b: Pose) -> Pose:
    """Pose applying b first, then a."""
    R = a.rotation @ b.rotation
    if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_DRIFT:
        R = _project_rotation(R)
    return Pose(R, a.rotation @ b.translation + a.translation)


def se3_inverse(a: Pose) -> Pose:
    Rt = a.rotation.T
    return Pose(Rt, -Rt @ a.translation)


def so3_exp(w) -> np.ndarray:
    """Rotation matrix for a rotation vector (Rodrigues)."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    th = np.linalg.norm(w)
    W = skew(w)
    if th < SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * (W @ W)
    A = np.sin(th) / th
    B = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + A * W + B * (W @ W)


def so3_log(R) -> np.ndarray:
    """Rotation vector of R. Raises for angles within PI_MARGIN of pi."""
    R = np.asarray(R, dtype=np.float64)
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    # atan2 of (sin, cos) keeps full precision near zero, unlike arccos
    cos_th = (np.trace(R) - 1.0) / 2.0
    th = np.arctan2(np.linalg.norm(vee), cos_th)
    if th > np.pi - PI_MARGIN:
        raise DegenerateRotationError(
            f"rotation angle {th:.6f} rad too close to pi for a single-branch log"
        )
    if th < SMALL_ANGLE:
        return vee
    return (th / np.sin(th)) * vee


def se3_exp(xi) -> Pose:
    """Pose reached by the twist xi = [v, w]."""
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    v, w = xi[:3], xi[3:]
    th = np.linalg.norm(w)
    W = skew(w)
    WW = W @ W
    if th < SMALL_ANGLE:
        R = np.eye(3) + W + 0.5 * WW
        V = np.eye(3) + 0.5 * W + WW / 6.0
    else:
        # half-angle form of (1 - cos)/th^2 avoids cancellation at small th
        A = np.sin(th) / th
        half = np.sin(th / 2.0) / th
        B = 2.0 * half * half
        C = (th - np.sin(th)) / (th ** 3)
        R = np.eye(3) + A * W + B * WW
        V = np.eye(3) + B * W + C * WW
    if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_DRIFT:
        R = _project_rotation(R)
    return Pose(R, V @ v)


def se3_log(T: Pose) -> np.ndarray:
    """Twist [v, w] with se3_exp(se3_log(T)) == T (angle < pi - PI_MARGIN)."""
    w = so3_log(T.rotation)
    th = np.linalg.norm(w)
    W = skew(w)
    WW = W @ W
    if th < SMALL_ANGLE:
        Vinv = np.eye(3) - 0.5 * W + WW / 12.0
    else:
        A = np.sin(th) / th
        half = np.sin(th / 2.0) / th
        B = 2.0 * half * half
        Vinv = np.eye(3) - 0.5 * W + (1.0 - A / (2.0 * B)) / (th * th) * WW
    return np.concatenate([Vinv @ T.translation, w])


def rotation_angle(R) -> float:
    """Angle of a rotation matrix in radians, in [0, pi]."""
    R = np.asarray(R, dtype=np.float64)
    s = 0.5 * np.linalg.norm(
        [R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]
    )
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arctan2(s, c))


@dataclass
class PointCloud:
    """Ordered 3-D points with optional per-point metadata.

    xyz is (N, 3) float64. ring/label are int arrays aligned with xyz; for
    ring-organized scans, points of one ring appear consecutively in
    acquisition (azimuth) order, which the feature extractor relies on.
    """

    xyz: np.ndarray
    intensity: np.ndarray | None = None
    ring: np.ndarray | None = None
    label: np.ndarray | None = None
    frame_id: str = ""
    timestamp: float = 0.0

    def __post_init__(self):
        xyz = np.ascontiguousarray(np.asarray(self.xyz, dtype=np.float64))
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            xyz = xyz.reshape(-1, 3)
        if not np.isfinite(xyz).all():
            raise ValueError("cloud coordinates must be finite")
        self.xyz = xyz
        n = len(xyz)
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(n)
        if self.ring is not None:
            self.ring = np.asarray(self.ring, dtype=np.int32).reshape(n)
        if self.label is not None:
            self.label = np.asarray(self.label, dtype=np.int32).reshape(n)

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def point_count(self) -> int:
        return len(self.xyz)


def transform_cloud(T: Pose, cloud: PointCloud) -> PointCloud:
    """Rigidly transform a cloud; metadata is carried over unchanged."""
    return PointCloud(
        xyz=T.apply(cloud.xyz),
        intensity=cloud.intensity,
        ring=cloud.ring,
        label=cloud.label,
        frame_id=cloud.frame_id,
        timestamp=cloud.timestamp,
    )


def centroid(cloud: PointCloud) -> np.ndarray:
    """Arithmetic mean of the coordinates."""
    if len(cloud) == 0:
        raise EmptyInputError("centroid of an empty cloud")
    return cloud.xyz.mean(axis=0)
