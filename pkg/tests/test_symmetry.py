"""Symmetry discovery and annotation handling."""

import json

import numpy as np
import pytest
from scipy.spatial import cKDTree

from poseforge import RigidPose, TriangleMesh
from poseforge.exceptions import DegenerateMesh, ParseError
from poseforge.geometry import axis_angle_matrix, rotation_angle
from poseforge.metrics import (
    SymmetrySet,
    discover_symmetries,
    icosphere_axes,
    load_symmetry_annotations,
    save_symmetry_annotations,
    symmetry_set_from_annotation,
)

from helpers import cube_mesh, prism_mesh, random_rotation


def _hausdorff(pts_a, pts_b):
    """max over a of min over b, both directions."""
    ab = cKDTree(pts_b).query(pts_a)[0].max()
    ba = cKDTree(pts_a).query(pts_b)[0].max()
    return max(ab, ba)


def _scalene_tetra(rng):
    """Strongly scalene tetrahedron: no edge lengths anywhere near equal."""
    verts = np.array(
        [
            [0.0, 0.0, 0.0],
            [100.0, 0.0, 0.0],
            [10.0, 180.0, 0.0],
            [260.0, 120.0, 230.0],
        ]
    )
    verts += rng.normal(0.0, 2.0, verts.shape)
    tris = np.array(
        [[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]], dtype=np.int32
    )
    return TriangleMesh(verts, tris)


def _permutation_symmetry_margin(verts):
    """Min over nontrivial vertex permutations of the best rigid-alignment
    max deviation. Large margin = the point set has no near-symmetry."""
    import itertools

    from poseforge.geometry import kabsch

    best = np.inf
    for p in itertools.permutations(range(len(verts))):
        if p == tuple(range(len(verts))):
            continue
        tgt = verts[list(p)]
        R, t = kabsch(verts, tgt)
        best = min(best, np.linalg.norm(verts @ R.T + t - tgt, axis=1).max())
    return best


class TestIcosphereAxes:
    def test_count_after_three_subdivisions(self):
        axes = icosphere_axes(3)
        assert axes.shape == (321, 3)

    def test_unit_and_antipodally_distinct(self):
        axes = icosphere_axes(3)
        assert np.allclose(np.linalg.norm(axes, axis=1), 1.0)
        dots = axes @ axes.T
        np.fill_diagonal(dots, 0.0)
        # no pair is (anti)parallel
        assert np.abs(dots).max() < 1.0 - 1e-9

    def test_contains_polar_axis(self):
        axes = icosphere_axes(3)
        best = np.abs(axes @ np.array([0.0, 0.0, 1.0])).max()
        assert best == pytest.approx(1.0, abs=1e-12)

    def test_coarser_levels_nest_in_size(self):
        n = [len(icosphere_axes(s)) for s in range(3)]
        assert n == [6, 21, 81]


class TestSymmetrySet:
    def test_identity_always_first(self):
        s = SymmetrySet()
        assert len(s) == 1
        assert np.allclose(s[0].rotation, np.eye(3))
        assert np.allclose(s[0].translation, 0.0)

    def test_identity_not_duplicated(self):
        s = SymmetrySet([RigidPose.identity()])
        assert len(s) == 1

    def test_keeps_given_transforms(self):
        rng = np.random.default_rng(60)
        extra = RigidPose(random_rotation(rng), rng.normal(0, 5, 3))
        s = SymmetrySet([extra])
        assert len(s) == 2
        assert np.allclose(s[1].rotation, extra.rotation)

    def test_identity_only_helper(self):
        assert len(SymmetrySet.identity_only()) == 1


class TestDiscovery:
    def test_scalene_tetrahedron_only_identity(self):
        rng = np.random.default_rng(61)
        mesh = _scalene_tetra(rng)
        # oracle precondition: no vertex permutation is realizable by a
        # rigid transform anywhere near the acceptance tolerance
        eps = max(15.0, 0.1 * mesh.diameter)
        assert _permutation_symmetry_margin(mesh.vertices) > 2 * eps
        syms = discover_symmetries(mesh)
        assert len(syms) == 1

    def test_cube_has_twenty_four(self):
        syms = discover_symmetries(cube_mesh(60.0))
        assert len(syms) == 24

    def test_cube_rotations_permute_vertices(self):
        mesh = cube_mesh(60.0)
        syms = discover_symmetries(mesh)
        for s in syms:
            mapped = mesh.vertices @ s.rotation.T + s.translation
            # every mapped vertex lands exactly on some original vertex
            d = cKDTree(mesh.vertices).query(mapped)[0]
            assert d.max() < 1e-6

    def test_prism_rotations_about_axis(self):
        mesh = prism_mesh(72, 35.0, 80.0)
        syms = discover_symmetries(mesh)
        about_axis = 0
        for s in syms:
            if np.allclose(s.rotation @ [0, 0, 1.0], [0, 0, 1.0], atol=1e-4):
                about_axis += 1
        assert about_axis >= 60

    def test_every_transform_within_epsilon(self):
        mesh = prism_mesh(24, 35.0, 80.0)
        eps = max(15.0, 0.1 * mesh.diameter)
        syms = discover_symmetries(mesh)
        assert len(syms) >= 24
        for s in syms:
            mapped = mesh.vertices @ s.rotation.T + s.translation
            assert _hausdorff(mapped, mesh.vertices) < eps

    def test_no_near_duplicates(self):
        syms = discover_symmetries(cube_mesh(60.0))
        Rs = [s.rotation for s in syms]
        for i in range(len(Rs)):
            for j in range(i + 1, len(Rs)):
                assert rotation_angle(Rs[i].T @ Rs[j]) > np.deg2rad(3.0)

    def test_offset_cube_keeps_count(self):
        # symmetry about the centroid, not the origin
        syms = discover_symmetries(cube_mesh(60.0, center=(200.0, -80.0, 50.0)))
        assert len(syms) == 24
        # non-identity transforms need a translation part now
        norms = [np.linalg.norm(s.translation) for s in syms[1:]]
        assert max(norms) > 1.0

    def test_degenerate_meshes_raise(self):
        with pytest.raises(DegenerateMesh):
            discover_symmetries(TriangleMesh(np.zeros((1, 3))))
        with pytest.raises(DegenerateMesh):
            discover_symmetries(TriangleMesh(np.zeros((5, 3))))


class TestAnnotations:
    def test_discrete_entry(self):
        R = axis_angle_matrix([0, 0, 1.0], np.pi)
        entry = {
            "symmetries_discrete": [
                {"R": list(R.reshape(-1)), "t": [0.0, 0.0, 0.0]}
            ]
        }
        s = symmetry_set_from_annotation(entry)
        assert len(s) == 2
        assert np.allclose(s[1].rotation, R)

    def test_continuous_axis_discretized(self):
        entry = {
            "symmetries_continuous": [
                {"axis": [0, 0, 1], "point": [10.0, 0.0, 0.0], "steps": 8}
            ]
        }
        s = symmetry_set_from_annotation(entry)
        assert len(s) == 8  # identity + 7 rotations
        p = np.array([10.0, 0.0, 0.0])
        for k, pose in enumerate(s):
            want_R = axis_angle_matrix([0, 0, 1.0], 2 * np.pi * k / 8)
            assert np.allclose(pose.rotation, want_R, atol=1e-9)
            # the axis point is a fixed point of every transform
            assert np.allclose(pose.apply(p), p, atol=1e-9)

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(62)
        table = {
            5: SymmetrySet(
                [RigidPose(random_rotation(rng), rng.normal(0, 9, 3))]
            ),
            11: SymmetrySet.identity_only(),
        }
        path = tmp_path / "symmetries.json"
        save_symmetry_annotations(path, table)
        back = load_symmetry_annotations(path)
        assert set(back) == {5, 11}
        assert len(back[5]) == 2
        assert np.allclose(back[5][1].rotation, table[5][1].rotation)
        assert np.allclose(back[5][1].translation, table[5][1].translation)

    def test_save_is_byte_stable(self, tmp_path):
        table = {3: SymmetrySet.identity_only()}
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_symmetry_annotations(a, table)
        save_symmetry_annotations(b, table)
        assert a.read_bytes() == b.read_bytes()

    def test_parse_error_reports_offset(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"5": {"symmetries_discrete": [')
        with pytest.raises(ParseError) as info:
            load_symmetry_annotations(path)
        assert info.value.path == str(path)
        assert info.value.offset is not None

    def test_parse_error_on_wrong_shape(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps([1, 2, 3]))
        with pytest.raises(ParseError):
            load_symmetry_annotations(path)

    def test_parse_error_on_bad_rotation_length(self, tmp_path):
        path = tmp_path / "bad.json"
        payload = {"2": {"symmetries_discrete": [{"R": [1, 0, 0], "t": [0, 0, 0]}]}}
        path.write_text(json.dumps(payload))
        with pytest.raises(ParseError):
            load_symmetry_annotations(path)
