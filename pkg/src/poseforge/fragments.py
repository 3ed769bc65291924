"""Surface fragments: the object representation behind the correspondences.

A model surface is split into n fragments by assigning every vertex to its
nearest fragment center; centers come from farthest point sampling. Each
fragment carries a local frame (center g, normalizer h) so a precise 3D
location can be encoded as a small offset r with x = h*r + g. Prediction
maps store, per output pixel, an object presence probability, per-fragment
probabilities, and per-fragment offsets; correspondences are read off them
with a relative-threshold rule that keeps several candidate fragments per
pixel.
"""

import json

import numpy as np

from . import _kernels
from .exceptions import (
    BadFragmentIndex,
    EmptyFragment,
    ParseError,
    TooFewVertices,
    ValidationError,
)
from .fitting.correspond import CorrespondenceSet
from .mesh import TriangleMesh

MIN_NORMALIZER_MM = 1.0  # keeps encode finite for single-vertex fragments


def _vertices_of(mesh_or_points):
    if isinstance(mesh_or_points, TriangleMesh):
        return mesh_or_points.vertices
    return np.asarray(mesh_or_points, dtype=np.float64).reshape(-1, 3)


def farthest_point_sampling(mesh, n, return_indices=False):
    """Pick n spread-out vertices greedily.

    The selection is seeded at the vertex centroid (which itself is not a
    returned center); each step adds the vertex farthest from everything
    picked so far, ties going to the lowest vertex index.
    """
    pts = _vertices_of(mesh)
    if n < 1:
        raise ValidationError("n must be >= 1")
    if pts.shape[0] < n:
        raise TooFewVertices(
            "requested %d centers from %d vertices" % (n, pts.shape[0])
        )
    # distance to the current selected set; the centroid seed only
    # initializes it and never appears in the output
    min_d = np.linalg.norm(pts - pts.mean(axis=0), axis=1)
    chosen = np.empty(n, dtype=np.int64)
    for k in range(n):
        idx = int(np.argmax(min_d))  # argmax takes the first (lowest) index
        chosen[k] = idx
        np.minimum(min_d, np.linalg.norm(pts - pts[idx], axis=1), out=min_d)
    if return_indices:
        return pts[chosen], chosen
    return pts[chosen]


def assign_fragments(mesh, centers):
    """Assign every vertex to its Euclidean-nearest center (ties: lowest index)."""
    pts = _vertices_of(mesh)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    if centers.shape[0] < 1:
        raise ValidationError("need at least one center")
    out = np.empty(pts.shape[0], dtype=np.int32)
    step = 8192
    for i in range(0, pts.shape[0], step):
        block = pts[i : i + step]
        d2 = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[i : i + step] = d2.argmin(axis=1)
    return out


def fragment_frames(mesh, centers, vertex_assignment=None):
    """Per-fragment frame: center g and normalizer h.

    h is the longest side of the fragment's axis-aligned 3D bounding box,
    clamped below at 1 mm so single-vertex fragments stay usable.

    :raises EmptyFragment: if some center owns no vertex.
    """
    pts = _vertices_of(mesh)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    if vertex_assignment is None:
        vertex_assignment = assign_fragments(pts, centers)
    vertex_assignment = np.asarray(vertex_assignment)
    n = centers.shape[0]
    counts = np.bincount(vertex_assignment, minlength=n)
    if counts.min() == 0:
        raise EmptyFragment(
            "fragment %d owns no vertices (n too large for this mesh)"
            % int(np.argmin(counts))
        )
    h = np.empty(n)
    for f in range(n):
        sub = pts[vertex_assignment == f]
        h[f] = (sub.max(axis=0) - sub.min(axis=0)).max()
    np.maximum(h, MIN_NORMALIZER_MM, out=h)
    return centers, h


class FragmentAtlas:
    """Fragment centers, normalizers, and the vertex-to-fragment map."""

    __slots__ = ("centers", "normalizers", "vertex_assignment")

    def __init__(self, centers, normalizers, vertex_assignment):
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        self.normalizers = np.asarray(normalizers, dtype=np.float64).reshape(-1)
        self.vertex_assignment = np.asarray(vertex_assignment, dtype=np.int32)
        if self.normalizers.shape[0] != self.centers.shape[0]:
            raise ValidationError("centers and normalizers disagree on n")
        if np.any(self.normalizers <= 0):
            raise ValidationError("normalizers must be positive")

    @property
    def fragment_count(self):
        return self.centers.shape[0]

    def check_index(self, f):
        f = np.asarray(f)
        if f.size and (f.min() < 0 or f.max() >= self.fragment_count):
            raise BadFragmentIndex(
                "fragment index out of range [0, %d)" % self.fragment_count
            )

    def assign(self, points):
        """Nearest-center fragment index for arbitrary 3D points."""
        return assign_fragments(points, self.centers)

    def encode(self, x, f):
        """Offset r = (x - g_f) / h_f of point(s) x in fragment f's frame."""
        self.check_index(f)
        x = np.asarray(x, dtype=np.float64)
        g = self.centers[f]
        h = self.normalizers[f]
        return (x - g) / (h if np.isscalar(f) else np.asarray(h)[..., None])

    def decode(self, r, f):
        """Point x = h_f * r + g_f from offset(s) r in fragment f's frame."""
        self.check_index(f)
        r = np.asarray(r, dtype=np.float64)
        g = self.centers[f]
        h = self.normalizers[f]
        return (h if np.isscalar(f) else np.asarray(h)[..., None]) * r + g


def build_fragment_atlas(mesh, n=64):
    """Atlas with n farthest-point-sampled fragments (n = 64 by default)."""
    centers = farthest_point_sampling(mesh, n)
    assignment = assign_fragments(mesh, centers)
    centers, h = fragment_frames(mesh, centers, assignment)
    return FragmentAtlas(centers, h, assignment)


def decode_fragment_coord(r, f, atlas):
    """Decode a regressed fragment offset into a model-space point (mm)."""
    return atlas.decode(r, f)


class PredictionMaps:
    """Dense per-pixel predictions for one object on a strided pixel grid.

    Grid cell (i, j) covers the stride x stride pixel block whose center is
    (j*stride + (stride-1)/2, i*stride + (stride-1)/2) in image coordinates;
    that center is the pixel coordinate a correspondence inherits.

    :param object_prob: (Hc, Wc) probability the cell shows the object.
    :param fragment_prob: (n, Hc, Wc) per-fragment probabilities.
    :param fragment_coord: (n, 3, Hc, Wc) per-fragment offsets r.
    """

    __slots__ = ("width", "height", "stride", "object_id",
                 "object_prob", "fragment_prob", "fragment_coord")

    def __init__(self, width, height, stride, object_id,
                 object_prob, fragment_prob, fragment_coord):
        width, height, stride = int(width), int(height), int(stride)
        if width < 1 or height < 1 or stride < 1:
            raise ValidationError("width, height, stride must be positive")
        hc = -(-height // stride)
        wc = -(-width // stride)
        a = np.ascontiguousarray(object_prob, dtype=np.float32)
        b = np.ascontiguousarray(fragment_prob, dtype=np.float32)
        r = np.ascontiguousarray(fragment_coord, dtype=np.float32)
        if a.shape != (hc, wc):
            raise ValidationError("object_prob must be (%d, %d)" % (hc, wc))
        if b.ndim != 3 or b.shape[1:] != (hc, wc):
            raise ValidationError("fragment_prob must be (n, %d, %d)" % (hc, wc))
        n = b.shape[0]
        if r.shape != (n, 3, hc, wc):
            raise ValidationError("fragment_coord must be (n, 3, Hc, Wc)")
        for name, arr in (("object_prob", a), ("fragment_prob", b)):
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValidationError("%s outside [0, 1]" % name)
        self.width, self.height, self.stride = width, height, stride
        self.object_id = int(object_id)
        self.object_prob = a
        self.fragment_prob = b
        self.fragment_coord = r

    @property
    def fragment_count(self):
        return self.fragment_prob.shape[0]

    @property
    def grid_shape(self):
        return self.object_prob.shape

    def cell_centers(self):
        """(Hc, Wc, 2) array of cell-center pixel coordinates (u, v)."""
        hc, wc = self.grid_shape
        half = (self.stride - 1) / 2.0
        us = np.arange(wc) * self.stride + half
        vs = np.arange(hc) * self.stride + half
        out = np.empty((hc, wc, 2))
        out[..., 0] = us[None, :]
        out[..., 1] = vs[:, None]
        return out

    # ---- file format -----------------------------------------------------
    # one JSON header line, then raw little-endian float32 planes in order:
    # a (1 plane), b (n planes), r (3n planes: per fragment x, y, z),
    # each plane row-major with ceil(width/stride)*ceil(height/stride) floats

    def save(self, path):
        hc, wc = self.grid_shape
        header = {
            "width": self.width,
            "height": self.height,
            "stride": self.stride,
            "object_id": self.object_id,
            "n": self.fragment_count,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("ascii"))
            fh.write(b"\n")
            fh.write(np.ascontiguousarray(self.object_prob, "<f4").tobytes())
            fh.write(np.ascontiguousarray(self.fragment_prob, "<f4").tobytes())
            # (n, 3, hc, wc) is already plane order: fragment-major, xyz inner
            fh.write(np.ascontiguousarray(self.fragment_coord, "<f4").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            line = fh.readline()
            if not line.endswith(b"\n"):
                raise ParseError("missing header line", path=path, offset=0)
            try:
                header = json.loads(line.decode("ascii"))
                width = int(header["width"])
                height = int(header["height"])
                stride = int(header["stride"])
                object_id = int(header["object_id"])
                n = int(header["n"])
            except (ValueError, KeyError, UnicodeDecodeError) as exc:
                raise ParseError("bad header: %s" % exc, path=path, offset=0)
            hc = -(-height // stride)
            wc = -(-width // stride)
            plane = hc * wc
            need = (1 + n + 3 * n) * plane * 4
            raw = fh.read()
            if len(raw) != need:
                raise ParseError(
                    "expected %d bytes of plane data, found %d" % (need, len(raw)),
                    path=path, offset=len(line),
                )
            data = np.frombuffer(raw, dtype="<f4")
            a = data[:plane].reshape(hc, wc)
            b = data[plane : (1 + n) * plane].reshape(n, hc, wc)
            r = data[(1 + n) * plane :].reshape(n, 3, hc, wc)
            return cls(width, height, stride, object_id, a, b, r)


def select_correspondences(maps, atlas, object_prob_min=0.1,
                           fragment_ratio_min=0.5):
    """Read many-to-many correspondences off prediction maps.

    A grid cell links to fragment f iff its object probability exceeds
    `object_prob_min` and b_f relative to the cell's best fragment exceeds
    `fragment_ratio_min`; several fragments may qualify per cell. Each link
    decodes to a 3D point via the atlas and gets confidence s = a * b_f.
    Output order: row-major cells, then ascending fragment index.
    """
    if not (0.0 <= object_prob_min < 1.0):
        raise ValidationError("object_prob_min must lie in [0, 1)")
    if not (0.0 < fragment_ratio_min <= 1.0):
        raise ValidationError("fragment_ratio_min must lie in (0, 1]")
    if maps.fragment_count != atlas.fragment_count:
        raise ValidationError(
            "maps carry %d fragments, atlas %d"
            % (maps.fragment_count, atlas.fragment_count)
        )
    a = maps.object_prob.astype(np.float64)
    b = maps.fragment_prob.astype(np.float64)
    bmax = b.max(axis=0)
    ok_cell = (a > object_prob_min) & (bmax > 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = b / bmax[None, :, :]
    keep = ok_cell[None, :, :] & (ratio > fragment_ratio_min)
    # row-major cells first, fragments innermost
    i_idx, j_idx, f_idx = np.nonzero(np.moveaxis(keep, 0, 2))
    if i_idx.size == 0:
        return CorrespondenceSet(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0))
    centers = maps.cell_centers()[i_idx, j_idx]
    r = maps.fragment_coord[f_idx, :, i_idx, j_idx].astype(np.float64)
    points = atlas.decode(r, f_idx)
    conf = a[i_idx, j_idx] * b[f_idx, i_idx, j_idx]
    return CorrespondenceSet(centers, points, conf)


def synthesize_prediction_maps(mesh, atlas, poses, cam, stride=4,
                               object_id=1):
    """Ideal prediction maps for posed instances of one object.

    This builds the regression targets a perfect network would output,
    shader style: the mesh is rasterized once per instance on the strided
    cell grid (a virtual camera whose integer pixels are exactly the cell
    centers), the nearest instance wins each cell, and the hit's
    perspective-correct barycentric weights interpolate the model-space
    surface point. A hit sets object probability 1, a one-hot fragment
    probability, and the exact encoded offset of the surface point.
    Decoding these maps therefore yields correspondences whose reprojection
    error under the true pose is zero (up to float32 storage).

    :param poses: list of RigidPose, one per instance in the image.
    :returns: PredictionMaps.
    """
    tris = np.asarray(mesh.triangles, dtype=np.int32).reshape(-1, 3)
    if tris.shape[0] == 0:
        raise ValidationError("synthesis needs a triangulated mesh")
    hc = -(-cam.height // stride)
    wc = -(-cam.width // stride)
    # cell (i, j) has its center at pixel (j*stride + half, i*stride + half),
    # so integer pixel (j, i) of this scaled camera is exactly that center
    half = (stride - 1) / 2.0
    fx, fy = cam.fx / stride, cam.fy / stride
    cx, cy = (cam.cx - half) / stride, (cam.cy - half) / stride

    best_z = np.full((hc, wc), np.inf)
    owner = np.full((hc, wc), -1, dtype=np.int64)
    tri_of = np.full((hc, wc), -1, dtype=np.int32)
    bary = np.zeros((hc, wc, 3))
    for k, pose in enumerate(poses):
        pv = pose.apply(mesh.vertices)
        zbuf, tri_idx, weights = _kernels.rasterize(
            pv, tris, fx, fy, cx, cy, wc, hc, True)
        closer = (tri_idx >= 0) & (zbuf < best_z)
        best_z[closer] = zbuf[closer]
        owner[closer] = k
        tri_of[closer] = tri_idx[closer]
        bary[closer] = weights[closer]

    a = np.zeros((hc, wc), dtype=np.float64)
    b = np.zeros((atlas.fragment_count, hc, wc), dtype=np.float64)
    r = np.zeros((atlas.fragment_count, 3, hc, wc), dtype=np.float64)
    hit = owner >= 0
    if np.any(hit):
        i_idx, j_idx = np.nonzero(hit)
        corners = mesh.vertices[tris[tri_of[hit]]]     # (n, 3 verts, 3)
        points = np.einsum("nc,ncj->nj", bary[hit], corners)
        frag = atlas.assign(points)
        offs = atlas.encode(points, frag)
        a[i_idx, j_idx] = 1.0
        b[frag, i_idx, j_idx] = 1.0
        r[frag, :, i_idx, j_idx] = offs
    return PredictionMaps(cam.width, cam.height, stride, object_id,
                          a, b, r)
