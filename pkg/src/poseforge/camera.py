"""Pinhole camera model.

Image coordinates are pixels with x to the right and y down; the value stored
at depth map position (row v, column u) belongs to the ray through pixel
coordinate (u, v), i.e. integer pixel indices are the sample coordinates.
"""

import numpy as np

from .exceptions import DimensionMismatch, NonPositiveDepth, ValidationError


class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths, principal point, image size (px).

    :param fx, fy: focal lengths in pixels (> 0).
    :param cx, cy: principal point; must lie inside the image.
    :param width, height: image size in pixels.
    """

    __slots__ = ("fx", "fy", "cx", "cy", "width", "height")

    def __init__(self, fx, fy, cx, cy, width, height):
        fx, fy, cx, cy = float(fx), float(fy), float(cx), float(cy)
        width, height = int(width), int(height)
        if not (fx > 0 and fy > 0):
            raise ValidationError("focal lengths must be positive")
        if not (width > 0 and height > 0):
            raise ValidationError("image size must be positive")
        if not (0 <= cx < width and 0 <= cy < height):
            raise ValidationError("principal point must lie inside the image")
        self.fx, self.fy, self.cx, self.cy = fx, fy, cx, cy
        self.width, self.height = width, height

    @classmethod
    def from_matrix(cls, K, width, height):
        K = np.asarray(K, dtype=np.float64)
        if K.shape != (3, 3):
            raise ValidationError("camera matrix must be 3x3")
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], width, height)

    @property
    def K(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def __repr__(self):
        return "CameraIntrinsics(fx=%g, fy=%g, cx=%g, cy=%g, width=%d, height=%d)" % (
            self.fx, self.fy, self.cx, self.cy, self.width, self.height,
        )


def project(x, pose, cam):
    """Project model-space point(s) to pixel coordinates.

    u = (fx * X / Z + cx, fy * Y / Z + cy) where (X, Y, Z) = R x + t.

    :param x: one point (3,) or a stack (n, 3), millimeters.
    :raises NonPositiveDepth: if any transformed point has Z <= 0.
    """
    pts = pose.apply(x)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    z = pts[:, 2]
    if np.any(z <= 0):
        raise NonPositiveDepth(
            "point behind camera (min Z = %.6g mm)" % float(z.min())
        )
    u = np.empty((pts.shape[0], 2))
    u[:, 0] = cam.fx * pts[:, 0] / z + cam.cx
    u[:, 1] = cam.fy * pts[:, 1] / z + cam.cy
    return u[0] if single else u


def backproject(u, z, cam):
    """Invert the pinhole projection at known depth Z (camera frame).

    :param u: pixel coordinate(s) (2,) or (n, 2).
    :param z: depth(s) along the optical axis, millimeters.
    """
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 1
    u2 = np.atleast_2d(u)
    z = np.broadcast_to(np.asarray(z, dtype=np.float64), u2.shape[0])
    pts = np.empty((u2.shape[0], 3))
    pts[:, 0] = (u2[:, 0] - cam.cx) / cam.fx * z
    pts[:, 1] = (u2[:, 1] - cam.cy) / cam.fy * z
    pts[:, 2] = z
    return pts[0] if single else pts


def ray_norms(cam, stride=1):
    """Per-pixel |ray| factors converting Z depth to camera-center distance.

    Entry (v, u) is sqrt(((u-cx)/fx)^2 + ((v-cy)/fy)^2 + 1) evaluated at the
    integer pixel grid (optionally subsampled cell centers with `stride`).
    """
    if stride == 1:
        us = np.arange(cam.width, dtype=np.float64)
        vs = np.arange(cam.height, dtype=np.float64)
    else:
        half = (stride - 1) / 2.0
        us = np.arange(-(-cam.width // stride), dtype=np.float64) * stride + half
        vs = np.arange(-(-cam.height // stride), dtype=np.float64) * stride + half
    xn = (us - cam.cx) / cam.fx
    yn = (vs - cam.cy) / cam.fy
    return np.sqrt(xn[None, :] ** 2 + yn[:, None] ** 2 + 1.0)


def depth_to_distance(depth, cam):
    """Convert a Z-depth map to a camera-center distance map.

    distance(u, v) = Z(u, v) * sqrt(((u-cx)/fx)^2 + ((v-cy)/fy)^2 + 1);
    zero (no data) pixels stay zero.

    :raises DimensionMismatch: if the map is not height x width.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (cam.height, cam.width):
        raise DimensionMismatch(
            "depth map is %r, camera expects %r"
            % (depth.shape, (cam.height, cam.width))
        )
    return depth * ray_norms(cam)
