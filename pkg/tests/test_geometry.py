import numpy as np
import pytest

from lidarbench.errors import DegenerateRotationError, EmptyInputError
from lidarbench.geometry import (
    PointCloud,
    Pose,
    centroid,
    rotation_angle,
    se3_compose,
    se3_exp,
    se3_inverse,
    se3_log,
    so3_exp,
    transform_cloud,
)


def rotz(deg):
    a = np.radians(deg)
    return Pose(
        np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]]),
        np.zeros(3),
    )


def pose_diff(a, b):
    d = se3_compose(se3_inverse(a), b)
    return np.linalg.norm(d.translation) + rotation_angle(d.rotation)


def random_pose(rng, max_angle=3.0, max_trans=10.0):
    w = rng.normal(size=3)
    w *= rng.uniform(0, max_angle) / np.linalg.norm(w)
    return Pose(so3_exp(w), rng.uniform(-max_trans, max_trans, 3))


class TestCompose:
    def test_identity(self):
        T = rotz(30)
        assert pose_diff(se3_compose(Pose.identity(), T), T) < 1e-12

    def test_inverse_roundtrip(self):
        T = Pose(so3_exp([0.3, -0.2, 0.9]), [1.0, 2.0, 3.0])
        assert pose_diff(se3_compose(T, se3_inverse(T)), Pose.identity()) < 1e-12

    def test_translations_commute(self):
        a = Pose.from_translation([1, 0, 0])
        b = Pose.from_translation([0, 2, 0])
        c = se3_compose(a, b)
        np.testing.assert_allclose(c.translation, [1, 2, 0], atol=1e-15)

    def test_associative(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b, c = (random_pose(rng) for _ in range(3))
            lhs = se3_compose(se3_compose(a, b), c)
            rhs = se3_compose(a, se3_compose(b, c))
            assert pose_diff(lhs, rhs) < 1e-9

    def test_two_sided_inverse(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = random_pose(rng)
            assert pose_diff(se3_compose(a, se3_inverse(a)), Pose.identity()) < 1e-9
            assert pose_diff(se3_compose(se3_inverse(a), a), Pose.identity()) < 1e-9


class TestInverse:
    def test_identity(self):
        assert pose_diff(se3_inverse(Pose.identity()), Pose.identity()) < 1e-15

    def test_translation(self):
        inv = se3_inverse(Pose.from_translation([1, 2, 3]))
        np.testing.assert_allclose(inv.translation, [-1, -2, -3], atol=1e-15)

    def test_rotation(self):
        assert pose_diff(se3_inverse(rotz(90)), rotz(-90)) < 1e-12


class TestExpLog:
    def test_log_identity(self):
        np.testing.assert_allclose(se3_log(Pose.identity()), np.zeros(6), atol=1e-15)

    def test_log_pure_translation(self):
        xi = se3_log(Pose.from_translation([3, 4, 0]))
        np.testing.assert_allclose(xi, [3, 4, 0, 0, 0, 0], atol=1e-12)

    def test_log_pure_rotation(self):
        th = np.radians(90)
        xi = se3_log(rotz(90))
        np.testing.assert_allclose(xi, [0, 0, 0, 0, 0, th], atol=1e-12)

    def test_exp_zero(self):
        assert pose_diff(se3_exp(np.zeros(6)), Pose.identity()) < 1e-15

    def test_exp_pure_translation(self):
        T = se3_exp([1, 0, 0, 0, 0, 0])
        assert pose_diff(T, Pose.from_translation([1, 0, 0])) < 1e-15

    def test_roundtrip_random_twists(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(1000):
            w = rng.normal(size=3)
            w *= rng.uniform(0, 3.0) / np.linalg.norm(w)
            xi = np.concatenate([rng.uniform(-10, 10, 3), w])
            back = se3_log(se3_exp(xi))
            worst = max(worst, np.abs(back - xi).max())
        assert worst < 1e-9

    def test_roundtrip_small_angles(self):
        rng = np.random.default_rng(3)
        for scale in (1e-12, 1e-10, 1e-7, 1e-4):
            xi = np.concatenate([rng.normal(size=3), rng.normal(size=3) * scale])
            back = se3_log(se3_exp(xi))
            assert np.abs(back - xi).max() < 1e-9

    def test_near_pi_rejected(self):
        with pytest.raises(DegenerateRotationError):
            se3_log(Pose(so3_exp([np.pi - 1e-5, 0, 0]), np.zeros(3)))


class TestCloudOps:
    def test_transform_identity(self):
        c = PointCloud(np.array([[1.0, 2.0, 3.0]]))
        out = transform_cloud(Pose.identity(), c)
        np.testing.assert_allclose(out.xyz, c.xyz)

    def test_transform_translation(self):
        c = PointCloud(np.zeros((1, 3)))
        out = transform_cloud(Pose.from_translation([1, 0, 0]), c)
        np.testing.assert_allclose(out.xyz, [[1, 0, 0]])

    def test_isometry(self):
        rng = np.random.default_rng(0)
        c = PointCloud(rng.normal(size=(100, 3)) * 5)
        T = random_pose(rng)
        out = transform_cloud(T, c)
        d0 = np.linalg.norm(c.xyz[:, None] - c.xyz[None, :], axis=2)
        d1 = np.linalg.norm(out.xyz[:, None] - out.xyz[None, :], axis=2)
        assert np.abs(d0 - d1).max() < 1e-9

    def test_metadata_preserved(self):
        c = PointCloud(
            np.zeros((3, 3)), ring=[0, 1, 2], label=[1, 0, 2], intensity=[0.5, 1, 2]
        )
        out = transform_cloud(rotz(45), c)
        np.testing.assert_array_equal(out.ring, c.ring)
        np.testing.assert_array_equal(out.label, c.label)
        np.testing.assert_array_equal(out.intensity, c.intensity)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[np.nan, 0, 0]]))


class TestCentroid:
    def test_two_points(self):
        c = PointCloud(np.array([[0.0, 0, 0], [2.0, 0, 0]]))
        np.testing.assert_allclose(centroid(c), [1, 0, 0])

    def test_single_point(self):
        np.testing.assert_allclose(centroid(PointCloud(np.ones((1, 3)))), [1, 1, 1])

    def test_mean(self):
        c = PointCloud(np.array([[0, 0, 0], [1, 2, 3], [2, 4, 6]], dtype=float))
        np.testing.assert_allclose(centroid(c), [1, 2, 3])

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            centroid(PointCloud(np.zeros((0, 3))))

    def test_equivariance(self):
        rng = np.random.default_rng(5)
        c = PointCloud(rng.normal(size=(50, 3)))
        T = random_pose(rng)
        lhs = centroid(transform_cloud(T, c))
        rhs = T.apply(centroid(c))
        assert np.abs(lhs - rhs).max() < 1e-12
