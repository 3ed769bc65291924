"""Hot numeric kernels with two interchangeable backends.

`native` is a Cython extension built at install time; `numpy_impl` is a pure
NumPy fallback with identical semantics. The active backend is picked at
import: native when available, unless the POSE_FORGE_BACKEND environment
variable forces one of {"native", "numpy"}.

Kernel semantics (both backends):

rasterize(points_cam, triangles, fx, fy, cx, cy, width, height, want_weights)
    Z-buffer rasterization of a triangle mesh given camera-space vertices.
    Pixel (row v, col u) samples the exact coordinate (u, v). Returns
    (zbuf, tri_index, weights): zbuf is (H, W) float64 with 0 where nothing
    was hit, tri_index is (H, W) int32 with -1 misses, weights is (H, W, 3)
    perspective-correct barycentric weights (or None unless requested).
    Triangles with any vertex at Z <= 1e-9 are skipped (no near-plane
    clipping); shared edges are covered exactly once via a top-left-style
    ownership rule; there is no backface culling.

reproject_sq_errors(R, t, points, pixels, fx, fy, cx, cy)
    Squared pixel reprojection error per correspondence; +inf where the
    transformed point has Z <= 0.

pose_quality(R, t, points, pixels, group_id, n_groups, tau_sq, fx, fy,
             cx, cy, cap)
    Pose quality: mean over pixel groups of the best truncated-quadratic
    kernel value max(0, 1 - e^2/tau^2), optionally clamped from above by
    `cap` (per-correspondence, the multi-instance "already explained"
    ceiling e'^2/tau^2). group_id must label correspondences that share a
    pixel with the same integer in [0, n_groups).
"""

import os as _os

from . import numpy_impl as _numpy_impl

try:
    from . import native as _native
except ImportError:
    _native = None

_forced = _os.environ.get("POSE_FORGE_BACKEND", "").strip().lower()
if _forced == "numpy":
    _impl = _numpy_impl
elif _forced == "native":
    if _native is None:
        raise ImportError(
            "POSE_FORGE_BACKEND=native but the compiled extension is not "
            "installed (build with a C compiler and Cython present)"
        )
    _impl = _native
elif _forced:
    raise ImportError(
        "POSE_FORGE_BACKEND must be 'native' or 'numpy', got %r" % _forced
    )
else:
    _impl = _native if _native is not None else _numpy_impl


def backend_name():
    """Name of the active backend: 'native' or 'numpy'."""
    return "native" if _impl is _native else "numpy"


def get_backend(name=None):
    """Return a backend module by name (active backend when name is None)."""
    if name is None:
        return _impl
    if name == "numpy":
        return _numpy_impl
    if name == "native":
        if _native is None:
            raise ImportError("native kernel backend is not installed")
        return _native
    raise ValueError("unknown backend %r" % (name,))


def rasterize(points_cam, triangles, fx, fy, cx, cy, width, height,
              want_weights=False):
    return _impl.rasterize(points_cam, triangles, fx, fy, cx, cy,
                           width, height, want_weights)


def reproject_sq_errors(R, t, points, pixels, fx, fy, cx, cy):
    return _impl.reproject_sq_errors(R, t, points, pixels, fx, fy, cx, cy)


def pose_quality(R, t, points, pixels, group_id, n_groups, tau_sq,
                 fx, fy, cx, cy, cap=None):
    return _impl.pose_quality(R, t, points, pixels, group_id, n_groups,
                              tau_sq, fx, fy, cx, cy, cap)
