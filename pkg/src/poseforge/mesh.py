"""Triangle meshes and the object diameter."""

import numpy as np

from .exceptions import DegenerateMesh, ValidationError


class TriangleMesh:
    """Indexed triangle mesh, vertices in millimeters.

    :param vertices: (V, 3) float array.
    :param triangles: (T, 3) integer array of vertex indices; may be empty
        for point-cloud-only uses.
    :param normals: optional (V, 3) unit vectors.
    """

    __slots__ = ("vertices", "triangles", "normals", "_diameter")

    def __init__(self, vertices, triangles=None, normals=None):
        V = np.ascontiguousarray(vertices, dtype=np.float64)
        if V.ndim != 2 or V.shape[1] != 3 or V.shape[0] == 0:
            raise ValidationError("vertices must be a nonempty (V, 3) array")
        if not np.all(np.isfinite(V)):
            raise ValidationError("vertices contain non-finite values")
        if triangles is None:
            T = np.zeros((0, 3), dtype=np.int32)
        else:
            T = np.ascontiguousarray(triangles, dtype=np.int32)
            if T.size and (T.ndim != 2 or T.shape[1] != 3):
                raise ValidationError("triangles must be a (T, 3) index array")
            T = T.reshape(-1, 3)
            if T.size and (T.min() < 0 or T.max() >= V.shape[0]):
                raise ValidationError("triangle index out of range")
        N = None
        if normals is not None:
            N = np.ascontiguousarray(normals, dtype=np.float64)
            if N.shape != V.shape:
                raise ValidationError("normals must match vertices in shape")
        self.vertices = V
        self.triangles = T
        self.normals = N
        self._diameter = None

    @property
    def diameter(self):
        """Largest vertex-to-vertex distance (cached)."""
        if self._diameter is None:
            self._diameter = mesh_diameter(self)
        return self._diameter

    def transformed(self, pose):
        """A copy with `pose` applied to vertices (and rotated normals)."""
        N = None if self.normals is None else self.normals @ pose.rotation.T
        return TriangleMesh(pose.apply(self.vertices), self.triangles, N)

    def __repr__(self):
        return "TriangleMesh(%d vertices, %d triangles)" % (
            self.vertices.shape[0],
            self.triangles.shape[0],
        )


def _max_pairwise_distance(points):
    # blocked to keep memory bounded on large inputs
    best = 0.0
    n = points.shape[0]
    step = 1024
    for i in range(0, n, step):
        block = points[i : i + step]
        d2 = ((block[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        m = d2.max()
        if m > best:
            best = m
    return float(np.sqrt(best))


def mesh_diameter(mesh):
    """Largest distance between any pair of vertices.

    Computed exactly over convex-hull vertices (the farthest pair of a point
    set lies on its hull); falls back to all pairs when the hull is degenerate
    (coplanar or collinear input).

    :param mesh: TriangleMesh or (V, 3) array.
    :raises DegenerateMesh: fewer than 2 vertices.
    """
    pts = mesh.vertices if isinstance(mesh, TriangleMesh) else np.asarray(mesh, float)
    pts = pts.reshape(-1, 3)
    if pts.shape[0] < 2:
        raise DegenerateMesh("diameter needs at least 2 vertices")
    hull_pts = pts
    if pts.shape[0] > 4:
        try:
            from scipy.spatial import ConvexHull

            hull_pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass  # degenerate (flat) input: brute force below
    return _max_pairwise_distance(hull_pts)
