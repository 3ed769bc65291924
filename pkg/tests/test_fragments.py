"""Surface fragments: sampling, frames, encode/decode, correspondence selection."""

import numpy as np
import pytest

from poseforge import TriangleMesh, ValidationError
from poseforge.exceptions import (
    BadFragmentIndex,
    EmptyFragment,
    ParseError,
    TooFewVertices,
)
from poseforge.fragments import (
    FragmentAtlas,
    PredictionMaps,
    assign_fragments,
    build_fragment_atlas,
    decode_fragment_coord,
    farthest_point_sampling,
    fragment_frames,
    select_correspondences,
)

from helpers import cube_mesh


class TestFarthestPointSampling:
    def test_cube_first_pick_lowest_corner(self):
        mesh = cube_mesh(100.0)
        centers = farthest_point_sampling(mesh, 1)
        # all corners tie in distance to the centroid; index 0 wins
        assert np.array_equal(centers[0], mesh.vertices[0])

    def test_collinear_hand_trace(self):
        pts = np.zeros((11, 3))
        pts[:, 0] = np.arange(11.0)
        _, idx = farthest_point_sampling(pts, 2, return_indices=True)
        # centroid x=5: vertices 0 and 10 tie, 0 wins; then 10 is farthest
        assert idx.tolist() == [0, 10]

    def test_exhaustive_selection(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-50, 50, (17, 3))
        _, idx = farthest_point_sampling(pts, 17, return_indices=True)
        assert sorted(idx.tolist()) == list(range(17))

    def test_min_pairwise_distance_non_increasing(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-50, 50, (64, 3))
        centers = farthest_point_sampling(pts, 20)
        prev = np.inf
        for k in range(2, 21):
            sub = centers[:k]
            d = np.linalg.norm(sub[:, None] - sub[None], axis=2)
            np.fill_diagonal(d, np.inf)
            cur = d.min()
            assert cur <= prev + 1e-12
            prev = cur

    def test_too_few_vertices(self):
        with pytest.raises(TooFewVertices):
            farthest_point_sampling(np.zeros((3, 3)), 4)


class TestAssignFragments:
    def test_vertex_on_center(self):
        rng = np.random.default_rng(2)
        centers = rng.uniform(-50, 50, (5, 3))
        assert assign_fragments(centers[3][None], centers)[0] == 3

    def test_tie_breaks_to_lowest(self):
        centers = np.array([[0.0, 0, 0], [2.0, 0, 0]])
        assert assign_fragments(np.array([[1.0, 0, 0]]), centers)[0] == 0

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-80, 80, (300, 3))
        centers = rng.uniform(-80, 80, (16, 3))
        got = assign_fragments(pts, centers)
        d2 = ((pts[:, None] - centers[None]) ** 2).sum(axis=2)
        assert np.array_equal(got, d2.argmin(axis=1))


class TestFragmentFrames:
    def test_bbox_longest_side(self):
        pts = np.array([[0, 0, 0], [10.0, 4, 2], [5, 0, 1], [0, 4, 2]])
        centers = pts.mean(axis=0, keepdims=True)
        _, h = fragment_frames(pts, centers, np.zeros(4, dtype=int))
        assert h[0] == pytest.approx(10.0)

    def test_single_vertex_fragment_clamped(self):
        pts = np.array([[0.0, 0, 0], [100.0, 0, 0], [100.2, 0, 0]])
        centers = np.array([[0.0, 0, 0], [100.1, 0, 0]])
        _, h = fragment_frames(pts, centers)
        assert h[0] == pytest.approx(1.0)  # lone vertex, clamped
        assert h[1] == pytest.approx(1.0)  # 0.2 mm extent, clamped

    def test_empty_fragment_raises(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        centers = np.array([[0.0, 0, 0], [500.0, 0, 0]])
        with pytest.raises(EmptyFragment):
            fragment_frames(pts, centers)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-60, 60, (200, 3))
        centers = farthest_point_sampling(pts, 8)
        assignment = assign_fragments(pts, centers)
        _, h = fragment_frames(pts, centers, assignment)
        for f in range(8):
            sub = pts[assignment == f]
            expect = max((sub.max(0) - sub.min(0)).max(), 1.0)
            assert h[f] == pytest.approx(expect, abs=1e-12)


class TestDecode:
    def test_zero_offset_is_center(self):
        atlas = build_fragment_atlas(cube_mesh(80.0), 4)
        for f in range(4):
            assert np.allclose(decode_fragment_coord(np.zeros(3), f, atlas),
                               atlas.centers[f])

    def test_arithmetic(self):
        atlas = FragmentAtlas(np.array([[10.0, 20, 30]]), np.array([4.0]),
                              np.zeros(1, dtype=int))
        out = decode_fragment_coord(np.array([0.5, -0.25, 0.0]), 0, atlas)
        assert np.allclose(out, [12.0, 19.0, 30.0])

    def test_round_trip_all_vertices(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(-70, 70, (250, 3))
        mesh = TriangleMesh(pts)
        atlas = build_fragment_atlas(mesh, 16)
        f = atlas.vertex_assignment
        r = atlas.encode(pts, f)
        back = atlas.decode(r, f)
        assert np.abs(back - pts).max() < 1e-9

    def test_bad_index(self):
        atlas = build_fragment_atlas(cube_mesh(), 4)
        with pytest.raises(BadFragmentIndex):
            atlas.decode(np.zeros(3), 4)
        with pytest.raises(BadFragmentIndex):
            atlas.decode(np.zeros(3), -1)


def _tiny_maps(a, b, r=None, width=4, height=4, stride=4, object_id=1):
    a = np.asarray(a, dtype=np.float32).reshape(1, 1)
    b = np.asarray(b, dtype=np.float32).reshape(-1, 1, 1)
    n = b.shape[0]
    if r is None:
        r = np.zeros((n, 3, 1, 1), dtype=np.float32)
    return PredictionMaps(width, height, stride, object_id, a, b, r)


class TestSelectCorrespondences:
    def _atlas(self, n):
        centers = np.arange(n * 3, dtype=float).reshape(n, 3)
        return FragmentAtlas(centers, np.ones(n), np.zeros(n, dtype=int))

    def test_hand_case(self):
        maps = _tiny_maps(0.6, [0.5, 0.4, 0.1])
        cs = select_correspondences(maps, self._atlas(3), 0.1, 0.5)
        assert len(cs) == 2
        # fragments with b/bmax above 0.5: the first two, in index order
        assert np.allclose(cs.confidence, [0.6 * 0.5, 0.6 * 0.4])
        assert np.allclose(cs.points[0], self._atlas(3).centers[0])
        assert np.allclose(cs.pixels[0], [1.5, 1.5])  # stride-4 cell center

    def test_zero_object_prob_empty(self):
        maps = _tiny_maps(0.0, [1.0, 0.5])
        assert len(select_correspondences(maps, self._atlas(2))) == 0

    def test_monotone_in_thresholds(self):
        rng = np.random.default_rng(6)
        hc, wc, n = 6, 8, 5
        a = rng.uniform(0, 1, (hc, wc)).astype(np.float32)
        b = rng.uniform(0, 1, (n, hc, wc)).astype(np.float32)
        r = rng.uniform(-1, 1, (n, 3, hc, wc)).astype(np.float32)
        maps = PredictionMaps(wc * 4, hc * 4, 4, 1, a, b, r)
        atlas = self._atlas(n)
        base = len(select_correspondences(maps, atlas, 0.1, 0.5))
        for ta in (0.2, 0.4, 0.8):
            assert len(select_correspondences(maps, atlas, ta, 0.5)) <= base
        for tb in (0.6, 0.8, 1.0):
            assert len(select_correspondences(maps, atlas, 0.1, tb)) <= base

    def test_confidence_is_product_and_in_range(self):
        rng = np.random.default_rng(7)
        hc, wc, n = 5, 5, 4
        a = rng.uniform(0, 1, (hc, wc)).astype(np.float32)
        b = rng.uniform(0, 1, (n, hc, wc)).astype(np.float32)
        maps = PredictionMaps(wc * 4, hc * 4, 4, 1, a, b,
                              np.zeros((n, 3, hc, wc), np.float32))
        cs = select_correspondences(maps, self._atlas(n))
        assert len(cs) > 0
        assert cs.confidence.min() > 0 and cs.confidence.max() <= 1.0
        # recompute products from the raw planes
        cells = maps.cell_centers()
        for i in range(min(len(cs), 40)):
            u = cs.pixels[i]
            ij = np.argwhere((cells[..., 0] == u[0]) & (cells[..., 1] == u[1]))[0]
            prods = a[ij[0], ij[1]] * b[:, ij[0], ij[1]]
            assert np.any(np.isclose(prods.astype(np.float64), cs.confidence[i]))

    def test_probability_validation(self):
        with pytest.raises(ValidationError):
            _tiny_maps(1.5, [0.5])
        with pytest.raises(ValidationError):
            _tiny_maps(0.5, [-0.1])


class TestPredictionMapsIO:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        w, h, stride, n = 37, 21, 4, 6  # non-divisible sizes on purpose
        hc, wc = -(-h // stride), -(-w // stride)
        maps = PredictionMaps(
            w, h, stride, 9,
            rng.uniform(0, 1, (hc, wc)).astype(np.float32),
            rng.uniform(0, 1, (n, hc, wc)).astype(np.float32),
            rng.uniform(-1, 1, (n, 3, hc, wc)).astype(np.float32),
        )
        path = tmp_path / "maps.bin"
        maps.save(path)
        back = PredictionMaps.load(path)
        assert (back.width, back.height, back.stride, back.object_id) == (w, h, stride, 9)
        assert np.array_equal(back.object_prob, maps.object_prob)
        assert np.array_equal(back.fragment_prob, maps.fragment_prob)
        assert np.array_equal(back.fragment_coord, maps.fragment_coord)
        # and byte-for-byte stable on re-save
        path2 = tmp_path / "maps2.bin"
        back.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_truncated_file(self, tmp_path):
        maps = _tiny_maps(0.5, [0.5, 0.5])
        path = tmp_path / "maps.bin"
        maps.save(path)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(ParseError) as err:
            PredictionMaps.load(path)
        assert err.value.offset is not None

    def test_bad_header(self, tmp_path):
        path = tmp_path / "maps.bin"
        path.write_bytes(b'{"width": 4}\n')
        with pytest.raises(ParseError):
            PredictionMaps.load(path)

    def test_cell_grid_geometry(self):
        # 10x6 at stride 4 means ceil: 3 cells across, 2 down
        with pytest.raises(ValidationError):
            PredictionMaps(10, 6, 4, 1, np.zeros((1, 1), np.float32),
                           np.zeros((1, 1, 1), np.float32),
                           np.zeros((1, 3, 1, 1), np.float32))
        ok = PredictionMaps(10, 6, 4, 1, np.zeros((2, 3), np.float32),
                            np.zeros((1, 2, 3), np.float32),
                            np.zeros((1, 3, 2, 3), np.float32))
        centers = ok.cell_centers()
        assert centers.shape == (2, 3, 2)
        assert np.allclose(centers[0, 0], [1.5, 1.5])
        assert np.allclose(centers[1, 2], [9.5, 5.5])


class TestSynthesizePredictionMaps:
    def _setup(self):
        from poseforge import CameraIntrinsics, RigidPose
        from poseforge.fragments import synthesize_prediction_maps
        cam = CameraIntrinsics(300.0, 300.0, 159.5, 119.5, 320, 240)
        mesh = cube_mesh(60.0)
        atlas = build_fragment_atlas(mesh, n=8)
        poses = [RigidPose(np.eye(3), [-45.0, 0.0, 600.0]),
                 RigidPose(np.eye(3), [45.0, 10.0, 700.0])]
        maps = synthesize_prediction_maps(mesh, atlas, poses, cam,
                                          object_id=4)
        return cam, mesh, atlas, poses, maps

    def test_shapes_and_flags(self):
        cam, mesh, atlas, poses, maps = self._setup()
        assert maps.object_id == 4
        assert maps.grid_shape == (60, 80)
        a = maps.object_prob
        hit = a > 0
        assert np.array_equal(np.unique(a[hit]), [1.0])
        # one-hot fragment probabilities on hit cells
        b = maps.fragment_prob[:, hit]
        assert np.allclose(b.sum(axis=0), 1.0)
        assert np.array_equal(np.unique(b), [0.0, 1.0])
        # nothing predicted off the objects
        assert np.all(maps.fragment_prob[:, ~hit] == 0.0)

    def test_decoded_points_reproject_exactly(self):
        from poseforge.camera import project
        cam, mesh, atlas, poses, maps = self._setup()
        corrs = select_correspondences(maps, atlas)
        errs = []
        for pose in poses:
            uv = project(corrs.points, pose, cam)
            errs.append(np.linalg.norm(uv - corrs.pixels, axis=1))
        best = np.minimum(*errs)
        # float32 storage is the only loss
        assert best.max() < 1e-4

    def test_nearest_instance_wins(self):
        from poseforge import CameraIntrinsics, RigidPose
        from poseforge.fragments import synthesize_prediction_maps
        cam = CameraIntrinsics(300.0, 300.0, 159.5, 119.5, 320, 240)
        mesh = cube_mesh(60.0)
        atlas = build_fragment_atlas(mesh, n=8)
        near = RigidPose(np.eye(3), [0.0, 0.0, 500.0])
        far = RigidPose(np.eye(3), [0.0, 0.0, 900.0])
        both = synthesize_prediction_maps(mesh, atlas, [near, far], cam)
        alone = synthesize_prediction_maps(mesh, atlas, [near], cam)
        # where the near cube covers the far one, maps agree with
        # rendering the near cube alone
        hit = alone.object_prob > 0
        assert np.array_equal(both.fragment_prob[:, hit],
                              alone.fragment_prob[:, hit])

    def test_untriangulated_mesh_rejected(self):
        from poseforge import CameraIntrinsics, RigidPose, TriangleMesh
        from poseforge.fragments import synthesize_prediction_maps
        cam = CameraIntrinsics(300.0, 300.0, 159.5, 119.5, 320, 240)
        cloud = TriangleMesh(np.random.default_rng(0).uniform(-30, 30, (50, 3)))
        atlas = build_fragment_atlas(cloud, n=8)
        with pytest.raises(ValidationError):
            synthesize_prediction_maps(cloud, atlas,
                                       [RigidPose(np.eye(3), [0, 0, 500])],
                                       cam)

    def test_round_trips_through_file(self, tmp_path):
        cam, mesh, atlas, poses, maps = self._setup()
        path = tmp_path / "synth.bin"
        maps.save(path)
        back = PredictionMaps.load(path)
        assert np.array_equal(back.object_prob, maps.object_prob)
        assert np.array_equal(back.fragment_coord, maps.fragment_coord)
