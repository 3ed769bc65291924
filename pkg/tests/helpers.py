"""Shared test utilities: random scene generation used as independent oracles.

Poses and points are generated here from first principles (QR-orthonormalized
random matrices, analytic projections), so solver and metric outputs can be
checked against the generating ground truth rather than against themselves.
"""

import numpy as np

from poseforge import CameraIntrinsics, RigidPose, TriangleMesh


def random_rotation(rng):
    """Uniform-ish random proper rotation via QR of a Gaussian matrix."""
    A = rng.standard_normal((3, 3))
    Q, R = np.linalg.qr(A)
    Q = Q @ np.diag(np.sign(np.diag(R)))
    if np.linalg.det(Q) < 0:
        Q[:, 2] = -Q[:, 2]
    return Q


def random_pose(rng, t_range=(400.0, 1200.0)):
    """Random pose with the object placed in front of the camera."""
    R = random_rotation(rng)
    t = np.array(
        [
            rng.uniform(-100.0, 100.0),
            rng.uniform(-100.0, 100.0),
            rng.uniform(*t_range),
        ]
    )
    return RigidPose(R, t)


def default_camera(width=640, height=480, f=600.0):
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def cube_mesh(side=100.0, center=(0.0, 0.0, 0.0)):
    """Axis-aligned cube, 8 vertices, 12 triangles, centered at `center`."""
    h = side / 2.0
    c = np.asarray(center, dtype=float)
    verts = (
        np.array(
            [
                [-1, -1, -1],
                [+1, -1, -1],
                [+1, +1, -1],
                [-1, +1, -1],
                [-1, -1, +1],
                [+1, -1, +1],
                [+1, +1, +1],
                [-1, +1, +1],
            ],
            dtype=float,
        )
        * h
        + c
    )
    tris = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # z = -h face
            [4, 5, 6], [4, 6, 7],  # z = +h face
            [0, 1, 5], [0, 5, 4],  # y = -h
            [2, 3, 7], [2, 7, 6],  # y = +h
            [1, 2, 6], [1, 6, 5],  # x = +h
            [0, 4, 7], [0, 7, 3],  # x = -h
        ],
        dtype=np.int32,
    )
    return TriangleMesh(verts, tris)


def prism_mesh(n_sides=72, radius=35.0, height=80.0):
    """Regular n-gon prism centered at the origin, axis = +z."""
    ang = 2.0 * np.pi * np.arange(n_sides) / n_sides
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    lo = np.column_stack([ring, np.full(n_sides, -height / 2.0)])
    hi = np.column_stack([ring, np.full(n_sides, +height / 2.0)])
    caps = np.array([[0.0, 0.0, -height / 2.0], [0.0, 0.0, +height / 2.0]])
    verts = np.vstack([lo, hi, caps])
    tris = []
    bot_c, top_c = 2 * n_sides, 2 * n_sides + 1
    for i in range(n_sides):
        j = (i + 1) % n_sides
        tris.append([i, j, n_sides + i])
        tris.append([j, n_sides + j, n_sides + i])
        tris.append([j, i, bot_c])
        tris.append([n_sides + i, n_sides + j, top_c])
    return TriangleMesh(verts, np.array(tris, dtype=np.int32))
