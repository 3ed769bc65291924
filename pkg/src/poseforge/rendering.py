"""Software rendering of meshes into distance maps, and visibility masks.

A distance map stores, per pixel, the distance from the camera center to the
nearest surface point in millimeters (0 where nothing is hit). This is the
image-space substrate of the depth-based pose error and of the synthetic
end-to-end tests: ground-truth and estimated renderings are compared against
the measured scene distance map to decide which object pixels are visible.
"""

import numpy as np
from PIL import Image

from . import _kernels
from .camera import ray_norms
from .exceptions import DimensionMismatch, EmptyProjection, ValidationError

# A rendered surface may sit slightly behind the measured one without being
# counted as occluded; 15 mm absorbs sensor noise and model inaccuracies.
DELTA_MM = 15.0


class DistanceMap:
    """Per-pixel camera-center distance in millimeters; 0 = no surface.

    Wraps an (height, width) float array. Use `.data` for arithmetic; the
    wrapper also converts via np.asarray().
    """

    __slots__ = ("data",)

    def __init__(self, data):
        data = np.ascontiguousarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValidationError("distance map must be 2D")
        if not np.isfinite(data).all() or data.min() < 0:
            raise ValidationError("distances must be finite and >= 0")
        self.data = data

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    def coverage(self):
        """Boolean mask of pixels where a surface was hit."""
        return self.data > 0

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self):
        return "DistanceMap(%dx%d, %d covered)" % (
            self.width, self.height, int(np.count_nonzero(self.data)))


class PixelMask:
    """Boolean per-pixel mask with the same footprint as a distance map."""

    __slots__ = ("data",)

    def __init__(self, data):
        data = np.ascontiguousarray(data, dtype=bool)
        if data.ndim != 2:
            raise ValidationError("pixel mask must be 2D")
        self.data = data

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self):
        return "PixelMask(%dx%d, %d set)" % (
            self.width, self.height, int(np.count_nonzero(self.data)))


def _as_map(x):
    return x.data if isinstance(x, DistanceMap) else np.asarray(x, dtype=np.float64)


def _as_mask(x):
    return x.data if isinstance(x, PixelMask) else np.asarray(x, dtype=bool)


def render_distance_map(mesh, pose, cam):
    """Render a mesh under a pose into a camera-center distance map.

    Perspective projection with depth buffering; a pixel is covered iff its
    center falls inside a projected triangle (edge pixels follow the top-left
    rule, so triangles sharing an edge never double-own a pixel). Triangles
    with any vertex at or behind the camera are skipped; back faces are kept
    since evaluation meshes are not consistently wound. Deterministic:
    identical inputs give bit-identical maps.

    :param mesh: TriangleMesh in model coordinates (mm).
    :param pose: model-to-camera RigidPose.
    :param cam: CameraIntrinsics fixing the image size.
    :returns: DistanceMap; value 0 where no surface is hit.
    """
    pts_cam = pose.apply(mesh.vertices)
    zbuf, _, _ = _kernels.rasterize(
        pts_cam, mesh.triangles, cam.fx, cam.fy, cam.cx, cam.cy,
        cam.width, cam.height,
    )
    # Z along the optical axis -> euclidean distance from the camera center
    return DistanceMap(zbuf * ray_norms(cam))


def render_mask(mesh, pose, cam):
    """Boolean coverage of the rendered object (no distances)."""
    return PixelMask(render_distance_map(mesh, pose, cam).coverage())


def visibility_masks(dist_est, dist_gt, dist_img, delta=DELTA_MM):
    """Visibility of the estimated and ground-truth renderings in a scene.

    A rendered object pixel counts as visible when the model surface is at
    most `delta` behind the measured scene surface, or the scene distance is
    unknown (0) there. The estimate additionally inherits pixels visible in
    the ground-truth mask, so an estimate displaced behind a ground-truth
    object is not punished for being occluded by it.

    :param dist_est: rendering of the estimated pose.
    :param dist_gt: rendering of the ground-truth pose.
    :param dist_img: measured scene distance map.
    :param delta: occlusion tolerance in mm.
    :returns: (mask_est, mask_gt) PixelMask pair.
    :raises DimensionMismatch: if the three maps differ in shape.
    """
    d_est = _as_map(dist_est)
    d_gt = _as_map(dist_gt)
    d_img = _as_map(dist_img)
    if d_est.shape != d_img.shape or d_gt.shape != d_img.shape:
        raise DimensionMismatch(
            "distance maps differ in shape: %s, %s, %s"
            % (d_est.shape, d_gt.shape, d_img.shape))
    unknown = d_img == 0
    vis_gt = (d_gt > 0) & ((d_gt - d_img <= delta) | unknown)
    vis_est = (d_est > 0) & ((d_est - d_img <= delta) | unknown | vis_gt)
    return PixelMask(vis_est), PixelMask(vis_gt)


def visible_fraction(mask_gt, dist_gt):
    """Fraction of the projected surface that is visible.

    :param mask_gt: visibility mask of the ground-truth rendering.
    :param dist_gt: the ground-truth distance map itself.
    :returns: |visible| / |rendered|, in [0, 1].
    :raises EmptyProjection: if the rendering covers no pixels.
    """
    v = _as_mask(mask_gt)
    d = _as_map(dist_gt)
    rendered = int(np.count_nonzero(d > 0))
    if rendered == 0:
        raise EmptyProjection("ground-truth rendering covers no pixels")
    return float(np.count_nonzero(v)) / rendered


def save_distance_png(path, dmap, scale):
    """Write a distance map as 16-bit grayscale PNG (stored * scale = mm).

    :param scale: millimeters per stored unit, e.g. 0.1 for tenth-millimeter
        precision.
    :raises ValidationError: if a value does not fit in 16 bits.
    """
    d = _as_map(dmap)
    q = np.rint(d / float(scale))
    if q.max(initial=0) > 0xFFFF:
        raise ValidationError(
            "distance %.1f mm exceeds 16-bit range at scale %g"
            % (float(d.max()), scale))
    img = Image.fromarray(q.astype(np.uint16))
    img.save(path)


def load_distance_png(path, scale):
    """Read a 16-bit grayscale PNG written by save_distance_png."""
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError("expected single-channel image: %s" % (path,))
    return DistanceMap(arr * float(scale))
