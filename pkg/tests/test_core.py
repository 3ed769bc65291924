"""Core geometry: poses, projection, mesh diameter, depth-to-distance."""

import numpy as np
import pytest

from poseforge import (
    CameraIntrinsics,
    DegenerateMesh,
    DimensionMismatch,
    NonPositiveDepth,
    RigidPose,
    TriangleMesh,
    ValidationError,
    backproject,
    depth_to_distance,
    mesh_diameter,
    project,
    transform_point,
)
from poseforge.geometry import (
    axis_angle_matrix,
    kabsch,
    rotation_angle,
    rotation_between,
    rotvec_matrix,
)

from helpers import cube_mesh, default_camera, random_pose, random_rotation


class TestRigidPose:
    def test_identity_transform(self):
        assert np.allclose(transform_point([1, 2, 3], RigidPose.identity()), [1, 2, 3])

    def test_axis_rotation(self):
        R = axis_angle_matrix([0, 0, 1], np.pi / 2)
        pose = RigidPose(R, [0, 0, 0])
        assert np.allclose(transform_point([1, 0, 0], pose), [0, 1, 0], atol=1e-12)

    def test_round_trip_inverse(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            pose = random_pose(rng)
            x = rng.uniform(-200, 200, 3)
            back = transform_point(transform_point(x, pose), pose.inverse())
            assert np.allclose(back, x, atol=1e-9)

    def test_compose(self):
        rng = np.random.default_rng(8)
        a, b = random_pose(rng), random_pose(rng)
        x = rng.uniform(-50, 50, 3)
        assert np.allclose(a.compose(b).apply(x), a.apply(b.apply(x)), atol=1e-9)

    def test_rejects_improper_rotation(self):
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValidationError):
            RigidPose(refl, [0, 0, 0])

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValidationError):
            RigidPose(np.eye(3) * 1.001, [0, 0, 0])

    def test_rejects_non_finite(self):
        R = np.eye(3)
        with pytest.raises(ValidationError):
            RigidPose(R, [0, np.nan, 0])

    def test_immutable(self):
        pose = RigidPose.identity()
        with pytest.raises(AttributeError):
            pose.translation = np.zeros(3)
        with pytest.raises(ValueError):
            pose.rotation[0, 0] = 2.0


class TestProject:
    def test_principal_ray(self):
        cam = CameraIntrinsics(500, 500, 320, 240, 640, 480)
        u = project([0, 0, 1000], RigidPose.identity(), cam)
        assert np.allclose(u, [320, 240])

    def test_pinhole_offset(self):
        cam = CameraIntrinsics(500, 500, 320, 240, 640, 480)
        u = project([100, 0, 1000], RigidPose.identity(), cam)
        assert np.allclose(u, [370, 240])

    def test_backproject_inverse(self):
        rng = np.random.default_rng(11)
        cam = default_camera()
        for _ in range(50):
            pose = random_pose(rng)
            x = rng.uniform(-100, 100, 3)
            y = pose.apply(x)
            if y[2] <= 0:
                continue
            u = project(x, pose, cam)
            x_back = pose.inverse().apply(backproject(u, y[2], cam))
            assert np.allclose(x_back, x, atol=1e-6)

    def test_scale_equivariance(self):
        cam = default_camera()
        rng = np.random.default_rng(12)
        for _ in range(20):
            x, y = rng.uniform(-50, 50, 2)
            z = rng.uniform(300, 900)
            pp = np.array([cam.cx, cam.cy])
            u1 = project([x, y, z], RigidPose.identity(), cam) - pp
            u2 = project([2 * x, 2 * y, z], RigidPose.identity(), cam) - pp
            assert np.allclose(u2, 2 * u1, atol=1e-9)

    def test_behind_camera_raises(self):
        cam = default_camera()
        with pytest.raises(NonPositiveDepth):
            project([0, 0, -5], RigidPose.identity(), cam)
        with pytest.raises(NonPositiveDepth):
            project([0, 0, 0], RigidPose.identity(), cam)

    def test_batch_shape(self):
        cam = default_camera()
        pts = np.array([[0, 0, 500.0], [10, 20, 800.0]])
        u = project(pts, RigidPose.identity(), cam)
        assert u.shape == (2, 2)


class TestCameraIntrinsics:
    def test_validation(self):
        with pytest.raises(ValidationError):
            CameraIntrinsics(-1, 500, 320, 240, 640, 480)
        with pytest.raises(ValidationError):
            CameraIntrinsics(500, 500, 700, 240, 640, 480)

    def test_from_matrix_round_trip(self):
        cam = CameraIntrinsics(572.4, 573.6, 325.3, 242.0, 640, 480)
        cam2 = CameraIntrinsics.from_matrix(cam.K, 640, 480)
        assert cam2.fx == cam.fx and cam2.cy == cam.cy


class TestMeshDiameter:
    def test_cube_diagonal(self):
        assert mesh_diameter(cube_mesh(100.0)) == pytest.approx(100 * np.sqrt(3))

    def test_two_points(self):
        m = TriangleMesh(np.array([[0, 0, 0], [3, 0, 4.0]]))
        assert mesh_diameter(m) == pytest.approx(5.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-80, 80, (200, 3))
        d2 = ((pts[:, None] - pts[None]) ** 2).sum(axis=2)
        expected = np.sqrt(d2.max())
        assert mesh_diameter(TriangleMesh(pts)) == pytest.approx(expected, abs=1e-9)

    def test_pose_invariant(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-50, 50, (60, 3))
        m = TriangleMesh(pts)
        d0 = mesh_diameter(m)
        for _ in range(5):
            d1 = mesh_diameter(m.transformed(random_pose(rng)))
            assert d1 == pytest.approx(d0, abs=1e-9)

    def test_coplanar_fallback(self):
        pts = np.zeros((10, 3))
        pts[:, 0] = np.arange(10)
        pts[:, 1] = np.arange(10) % 3
        d2 = ((pts[:, None] - pts[None]) ** 2).sum(axis=2)
        assert mesh_diameter(TriangleMesh(pts)) == pytest.approx(np.sqrt(d2.max()))

    def test_single_vertex_raises(self):
        with pytest.raises(DegenerateMesh):
            mesh_diameter(TriangleMesh(np.array([[1.0, 2, 3]])))

    def test_triangle_index_validation(self):
        with pytest.raises(ValidationError):
            TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))


class TestDepthToDistance:
    def test_principal_point(self):
        cam = CameraIntrinsics(500, 500, 320, 240, 640, 480)
        depth = np.zeros((480, 640))
        depth[240, 320] = 1000.0
        dist = depth_to_distance(depth, cam)
        assert dist[240, 320] == pytest.approx(1000.0)

    def test_45_degree_ray(self):
        cam = CameraIntrinsics(500, 500, 100, 240, 1024, 480)
        depth = np.zeros((480, 1024))
        depth[240, 600] = 1000.0  # u - cx = 500 = fx
        dist = depth_to_distance(depth, cam)
        assert dist[240, 600] == pytest.approx(1000.0 * np.sqrt(2))

    def test_zeros_preserved_and_lower_bound(self):
        rng = np.random.default_rng(5)
        cam = default_camera(64, 48)
        depth = rng.uniform(100, 1000, (48, 64))
        depth[rng.random((48, 64)) < 0.3] = 0.0
        dist = depth_to_distance(depth, cam)
        assert np.all(dist[depth == 0] == 0)
        assert np.all(dist >= depth - 1e-12)

    def test_formula_oracle(self):
        rng = np.random.default_rng(6)
        cam = default_camera(64, 48, f=300.0)
        depth = rng.uniform(50, 2000, (48, 64))
        dist = depth_to_distance(depth, cam)
        for _ in range(30):
            v, u = rng.integers(0, 48), rng.integers(0, 64)
            expect = depth[v, u] * np.sqrt(
                ((u - cam.cx) / cam.fx) ** 2 + ((v - cam.cy) / cam.fy) ** 2 + 1.0
            )
            assert dist[v, u] == pytest.approx(expect, abs=1e-9)

    def test_dimension_mismatch(self):
        cam = default_camera(64, 48)
        with pytest.raises(DimensionMismatch):
            depth_to_distance(np.zeros((64, 48)), cam)


class TestRotationHelpers:
    def test_rotation_angle_known(self):
        R = axis_angle_matrix([0, 1, 0], 0.7)
        assert rotation_angle(R) == pytest.approx(0.7, abs=1e-12)

    def test_rotation_between_symmetry(self):
        rng = np.random.default_rng(13)
        Ra, Rb = random_rotation(rng), random_rotation(rng)
        assert rotation_between(Ra, Rb) == pytest.approx(rotation_between(Rb, Ra))

    def test_rotvec_round_trip(self):
        w = np.array([0.1, -0.2, 0.3])
        R = rotvec_matrix(w)
        assert rotation_angle(R) == pytest.approx(np.linalg.norm(w), abs=1e-12)
        assert np.allclose(R @ w, w)  # axis is fixed

    def test_kabsch_recovers_pose(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            pose = random_pose(rng)
            src = rng.uniform(-60, 60, (12, 3))
            dst = pose.apply(src)
            R, t = kabsch(src, dst)
            assert np.allclose(R, pose.rotation, atol=1e-9)
            assert np.allclose(t, pose.translation, atol=1e-6)

    def test_kabsch_proper_under_reflection(self):
        src = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
        dst = src * np.array([1, 1, -1.0])  # a reflection of the source
        R, _ = kabsch(src, dst)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
