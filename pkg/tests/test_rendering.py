"""Renderer vs a per-pixel ray-casting oracle, visibility masks, PNG io."""

import numpy as np
import pytest

from poseforge import CameraIntrinsics, RigidPose, TriangleMesh
from poseforge.exceptions import DimensionMismatch, EmptyProjection, ValidationError
from poseforge.rendering import (
    DistanceMap,
    PixelMask,
    load_distance_png,
    render_distance_map,
    render_mask,
    save_distance_png,
    visibility_masks,
    visible_fraction,
)

from helpers import cube_mesh


def _small_camera():
    return CameraIntrinsics(fx=150.0, fy=150.0, cx=80.0, cy=60.0,
                            width=160, height=120)


def _raycast_oracle(mesh, pose, cam):
    """Nearest-hit distances by intersecting every pixel ray with every
    triangle (Moller-Trumbore). Independent of the rasterizer."""
    verts = pose.apply(mesh.vertices)
    tris = mesh.triangles
    us, vs = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    dirs = np.stack([(us.ravel() - cam.cx) / cam.fx,
                     (vs.ravel() - cam.cy) / cam.fy,
                     np.ones(us.size)], axis=1)
    ray_len = np.linalg.norm(dirs, axis=1)
    best_t = np.full(us.size, np.inf)
    for tri in tris:
        a, b, c = verts[tri[0]], verts[tri[1]], verts[tri[2]]
        e1, e2 = b - a, c - a
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = -a
        bu = (pvec @ tvec) * inv
        qvec = np.cross(tvec, e1)
        bv = (dirs @ qvec) * inv
        t = (e2 @ qvec) * inv
        hit = ok & (bu >= 0) & (bv >= 0) & (bu + bv <= 1) & (t > 1e-9)
        best_t = np.where(hit & (t < best_t), t, best_t)
    dist = np.where(np.isinf(best_t), 0.0, best_t * ray_len)
    return dist.reshape(cam.height, cam.width)


class TestRenderDistanceMap:
    def test_empty_mesh_renders_nothing(self):
        cam = _small_camera()
        mesh = TriangleMesh(np.zeros((1, 3)), np.zeros((0, 3), dtype=np.int32))
        dmap = render_distance_map(mesh, RigidPose.identity(), cam)
        assert not dmap.coverage().any()

    def test_frontoparallel_triangle_distance_is_depth(self):
        cam = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)
        verts = np.array([[-100.0, -100, 1000],
                          [200.0, -100, 1000],
                          [-100.0, 200, 1000]])
        mesh = TriangleMesh(verts, np.array([[0, 1, 2]], dtype=np.int32))
        dmap = render_distance_map(mesh, RigidPose.identity(), cam)
        assert dmap.data[240, 320] == pytest.approx(1000.0, abs=1e-9)

    def test_matches_raycast_oracle(self):
        cam = _small_camera()
        rng = np.random.default_rng(30)
        verts = rng.uniform(-60, 60, (30, 3)) + np.array([0, 0, 500.0])
        tris = rng.integers(0, 30, (50, 3)).astype(np.int32)
        # drop triangles with repeated vertices
        tris = tris[(tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2])
                    & (tris[:, 0] != tris[:, 2])]
        mesh = TriangleMesh(verts, tris)
        dmap = render_distance_map(mesh, RigidPose.identity(), cam)
        oracle = _raycast_oracle(mesh, RigidPose.identity(), cam)
        got_cov = dmap.data > 0
        want_cov = oracle > 0
        n = got_cov.size
        disagree = np.count_nonzero(got_cov != want_cov)
        assert disagree <= max(1, n // 1000)  # edge pixels only
        both = got_cov & want_cov
        assert np.abs(dmap.data[both] - oracle[both]).max() < 1e-6

    def test_deterministic(self):
        cam = _small_camera()
        mesh = cube_mesh(60.0)
        pose = RigidPose(np.eye(3), np.array([5.0, -3.0, 500.0]))
        a = render_distance_map(mesh, pose, cam)
        b = render_distance_map(mesh, pose, cam)
        assert np.array_equal(a.data, b.data)

    def test_doubling_distance_quarters_pixel_count(self):
        # linear extent halves with distance, area goes with the square
        cam = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)
        mesh = cube_mesh(60.0)
        near = render_mask(mesh, RigidPose(np.eye(3), np.array([0, 0, 500.0])), cam)
        far = render_mask(mesh, RigidPose(np.eye(3), np.array([0, 0, 1000.0])), cam)
        ratio = np.count_nonzero(far.data) / np.count_nonzero(near.data)
        assert 0.25 * 0.85 < ratio < 0.25 * 1.15

    def test_behind_camera_geometry_is_skipped(self):
        cam = _small_camera()
        mesh = cube_mesh(60.0)
        dmap = render_distance_map(
            mesh, RigidPose(np.eye(3), np.array([0, 0, -500.0])), cam)
        assert not dmap.coverage().any()

    def test_shared_edge_owned_once(self):
        # two triangles forming a quad: every covered pixel has exactly one
        # owner, so distances equal the plane depth with no cracks
        cam = _small_camera()
        verts = np.array([[-50.0, -50, 400], [50.0, -50, 400],
                          [50.0, 50, 400], [-50.0, 50, 400]])
        mesh = TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]],
                                            dtype=np.int32))
        dmap = render_distance_map(mesh, RigidPose.identity(), cam)
        cov = dmap.coverage()
        assert cov.sum() > 1000
        # interior of the quad is fully covered (no missing diagonal seam)
        ys, xs = np.nonzero(cov)
        inner = cov[ys.min() + 1:ys.max(), xs.min() + 1:xs.max()]
        assert inner.all()


class TestVisibilityMasks:
    def _random_maps(self, rng, shape=(40, 50)):
        def sparse(p):
            m = rng.uniform(0, 1, shape) < p
            return np.where(m, rng.uniform(300, 900, shape), 0.0)
        return sparse(0.6), sparse(0.6), sparse(0.7)

    def test_matches_set_builder_oracle(self):
        rng = np.random.default_rng(31)
        delta = 15.0
        for _ in range(10):
            d_est, d_gt, d_img = self._random_maps(rng)
            v_est, v_gt = visibility_masks(d_est, d_gt, d_img, delta)
            h, w = d_gt.shape
            for i in range(h):
                for j in range(w):
                    want_gt = d_gt[i, j] > 0 and (
                        d_gt[i, j] - d_img[i, j] <= delta or d_img[i, j] == 0)
                    assert v_gt.data[i, j] == want_gt
                    want_est = d_est[i, j] > 0 and (
                        d_est[i, j] - d_img[i, j] <= delta
                        or d_img[i, j] == 0 or want_gt)
                    assert v_est.data[i, j] == want_est

    def test_unknown_scene_distance_counts_visible(self):
        rng = np.random.default_rng(32)
        d_gt = np.where(rng.uniform(0, 1, (20, 20)) < 0.5,
                        rng.uniform(300, 900, (20, 20)), 0.0)
        _, v_gt = visibility_masks(d_gt, d_gt, np.zeros((20, 20)))
        assert np.array_equal(v_gt.data, d_gt > 0)

    def test_scene_equal_to_render_fully_visible(self):
        rng = np.random.default_rng(33)
        d_gt = np.where(rng.uniform(0, 1, (20, 20)) < 0.5,
                        rng.uniform(300, 900, (20, 20)), 0.0)
        _, v_gt = visibility_masks(d_gt, d_gt, d_gt)
        assert np.array_equal(v_gt.data, d_gt > 0)

    def test_occluder_drops_pixels(self):
        d_gt = np.full((10, 10), 500.0)
        d_img = d_gt.copy()
        d_img[:, :5] = 500.0 - 2 * 15.0  # occluder well in front
        v_est, v_gt = visibility_masks(d_gt, d_gt, d_img)
        assert not v_gt.data[:, :5].any()
        assert v_gt.data[:, 5:].all()
        # the estimate coincides with the ground truth here, so the inherit
        # rule cannot rescue the occluded half either
        assert np.array_equal(v_est.data, v_gt.data)

    def test_estimate_inherits_ground_truth_pixels(self):
        # estimate is behind the scene surface beyond delta, but the pixel is
        # visible in the ground-truth mask, so the estimate keeps it
        d_est = np.full((4, 4), 800.0)
        d_gt = np.full((4, 4), 500.0)
        d_img = np.full((4, 4), 500.0)
        v_est, v_gt = visibility_masks(d_est, d_gt, d_img)
        assert v_gt.data.all()
        assert v_est.data.all()

    def test_subset_invariants(self):
        rng = np.random.default_rng(34)
        for _ in range(20):
            d_est, d_gt, d_img = self._random_maps(rng, (15, 15))
            v_est, v_gt = visibility_masks(d_est, d_gt, d_img)
            assert not (v_gt.data & ~(d_gt > 0)).any()
            assert not (v_est.data & ~(d_est > 0)).any()
        # equal coverage: ground-truth visibility implies estimate visibility
        d_gt = np.where(rng.uniform(0, 1, (15, 15)) < 0.6,
                        rng.uniform(300, 900, (15, 15)), 0.0)
        d_est = np.where(d_gt > 0, rng.uniform(300, 900, (15, 15)), 0.0)
        d_img = np.where(rng.uniform(0, 1, (15, 15)) < 0.7,
                         rng.uniform(300, 900, (15, 15)), 0.0)
        v_est, v_gt = visibility_masks(d_est, d_gt, d_img)
        assert not (v_gt.data & ~v_est.data).any()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            visibility_masks(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 5)))


class TestVisibleFraction:
    def test_unoccluded_is_one(self):
        d = np.zeros((8, 8))
        d[2:6, 2:6] = 500.0
        _, v = visibility_masks(d, d, np.zeros((8, 8)))
        assert visible_fraction(v, d) == 1.0

    def test_half_occluded(self):
        d = np.zeros((8, 8))
        d[2:6, 2:6] = 500.0
        img = d.copy()
        img[2:6, 2:4] = 400.0  # occluder 100 mm in front on half the pixels
        _, v = visibility_masks(d, d, img)
        assert visible_fraction(v, d) == pytest.approx(0.5)

    def test_empty_mask_is_zero(self):
        d = np.zeros((8, 8))
        d[3, 3] = 500.0
        assert visible_fraction(np.zeros((8, 8), bool), d) == 0.0

    def test_empty_projection_raises(self):
        with pytest.raises(EmptyProjection):
            visible_fraction(np.zeros((8, 8), bool), np.zeros((8, 8)))


class TestDistancePng:
    def test_round_trip_at_scale(self, tmp_path):
        rng = np.random.default_rng(35)
        d = np.where(rng.uniform(0, 1, (30, 40)) < 0.5,
                     rng.uniform(300, 3000, (30, 40)), 0.0)
        path = tmp_path / "d.png"
        save_distance_png(path, d, scale=0.1)
        back = load_distance_png(path, scale=0.1)
        assert np.abs(back.data - d).max() <= 0.05 + 1e-9  # half a unit

    def test_zero_stays_zero(self, tmp_path):
        path = tmp_path / "d.png"
        save_distance_png(path, np.zeros((5, 5)), scale=0.1)
        assert not load_distance_png(path, 0.1).coverage().any()

    def test_range_check(self, tmp_path):
        with pytest.raises(ValidationError):
            save_distance_png(tmp_path / "d.png", np.full((2, 2), 7000.0), 0.1)

    def test_wrapper_validation(self):
        with pytest.raises(ValidationError):
            DistanceMap(np.full((3, 3), -1.0))
        with pytest.raises(ValidationError):
            DistanceMap(np.zeros(9))
        m = PixelMask(np.ones((2, 2), bool))
        assert m.width == 2 and m.height == 2
