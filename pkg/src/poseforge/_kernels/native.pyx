# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython backend for the hot kernels: same semantics as numpy_impl.

The arithmetic mirrors the NumPy expressions operation for operation so the
two backends agree to the last bit on the rasterization ownership and
z-buffer decisions (no fast-math, no reassociation).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, INFINITY

cnp.import_array()

DEF Z_EPS = 1e-9


cdef inline bint _edge_owns(double ax, double ay, double bx, double by) nogil:
    cdef double dy = by - ay
    cdef double dx = bx - ax
    return dy > 0 or (dy == 0 and dx < 0)


def rasterize(points_cam, triangles, double fx, double fy, double cx,
              double cy, int width, int height, bint want_weights=False):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = \
        np.ascontiguousarray(points_cam, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] tris = \
        np.ascontiguousarray(np.asarray(triangles,
                                        dtype=np.int32).reshape(-1, 3))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] zbuf = \
        np.zeros((height, width), dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] tri_idx = \
        np.full((height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] weights = None
    if want_weights:
        weights = np.zeros((height, width, 3), dtype=np.float64)

    cdef Py_ssize_t n_pts = pts.shape[0]
    cdef Py_ssize_t n_tris = tris.shape[0]
    if n_tris == 0 or n_pts == 0:
        return zbuf, tri_idx, weights if want_weights else None

    cdef cnp.ndarray[cnp.float64_t, ndim=1] u = np.empty(n_pts)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.empty(n_pts)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] front = \
        np.zeros(n_pts, dtype=np.uint8)
    cdef Py_ssize_t i
    cdef double z_i
    for i in range(n_pts):
        z_i = pts[i, 2]
        if z_i > Z_EPS:
            front[i] = 1
            u[i] = fx * pts[i, 0] / z_i + cx
            v[i] = fy * pts[i, 1] / z_i + cy

    cdef Py_ssize_t k, tmp
    cdef Py_ssize_t i0, i1, i2
    cdef double x0, y0, x1, y1, x2, y2, area2
    cdef double lo_x, hi_x, lo_y, hi_y
    cdef int xmin, xmax, ymin, ymax, px, py
    cdef double fpx, fpy, e0, e1, e2, l0, l1, l2, inv_z, z_pix, w1, w2
    cdef bint own0, own1, own2, in0, in1, in2, flipped
    cdef double z0, z1, z2

    for k in range(n_tris):
        i0 = tris[k, 0]
        i1 = tris[k, 1]
        i2 = tris[k, 2]
        if not (front[i0] and front[i1] and front[i2]):
            continue
        x0 = u[i0]; y0 = v[i0]
        x1 = u[i1]; y1 = v[i1]
        x2 = u[i2]; y2 = v[i2]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        flipped = area2 < 0.0
        if flipped:
            tmp = i1; i1 = i2; i2 = tmp
            fpx = x1; x1 = x2; x2 = fpx
            fpy = y1; y1 = y2; y2 = fpy
            area2 = -area2
        lo_x = x0
        if x1 < lo_x: lo_x = x1
        if x2 < lo_x: lo_x = x2
        hi_x = x0
        if x1 > hi_x: hi_x = x1
        if x2 > hi_x: hi_x = x2
        lo_y = y0
        if y1 < lo_y: lo_y = y1
        if y2 < lo_y: lo_y = y2
        hi_y = y0
        if y1 > hi_y: hi_y = y1
        if y2 > hi_y: hi_y = y2
        xmin = <int>ceil(lo_x)
        if xmin < 0: xmin = 0
        xmax = <int>floor(hi_x)
        if xmax > width - 1: xmax = width - 1
        ymin = <int>ceil(lo_y)
        if ymin < 0: ymin = 0
        ymax = <int>floor(hi_y)
        if ymax > height - 1: ymax = height - 1
        if xmin > xmax or ymin > ymax:
            continue
        own0 = _edge_owns(x1, y1, x2, y2)
        own1 = _edge_owns(x2, y2, x0, y0)
        own2 = _edge_owns(x0, y0, x1, y1)
        z0 = pts[i0, 2]; z1 = pts[i1, 2]; z2 = pts[i2, 2]
        for py in range(ymin, ymax + 1):
            fpy = py
            for px in range(xmin, xmax + 1):
                fpx = px
                e0 = (x2 - x1) * (fpy - y1) - (y2 - y1) * (fpx - x1)
                in0 = e0 > 0 or (e0 == 0 and own0)
                if not in0:
                    continue
                e1 = (x0 - x2) * (fpy - y2) - (y0 - y2) * (fpx - x2)
                in1 = e1 > 0 or (e1 == 0 and own1)
                if not in1:
                    continue
                e2 = (x1 - x0) * (fpy - y0) - (y1 - y0) * (fpx - x0)
                in2 = e2 > 0 or (e2 == 0 and own2)
                if not in2:
                    continue
                l0 = e0 / area2
                l1 = e1 / area2
                l2 = e2 / area2
                inv_z = l0 / z0 + l1 / z1 + l2 / z2
                z_pix = 1.0 / inv_z
                if tri_idx[py, px] < 0 or z_pix < zbuf[py, px]:
                    zbuf[py, px] = z_pix
                    tri_idx[py, px] = k
                    if want_weights:
                        w1 = (l1 / z1) / inv_z
                        w2 = (l2 / z2) / inv_z
                        if flipped:
                            # report weights in the triangle's declared order
                            fpx = w1; w1 = w2; w2 = fpx
                        weights[py, px, 0] = (l0 / z0) / inv_z
                        weights[py, px, 1] = w1
                        weights[py, px, 2] = w2
    return zbuf, tri_idx, weights if want_weights else None


def reproject_sq_errors(R, t, points, pixels, double fx, double fy,
                        double cx, double cy):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Rm = \
        np.ascontiguousarray(R, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tv = \
        np.ascontiguousarray(t, dtype=np.float64).reshape(3)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] X = \
        np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] U = \
        np.ascontiguousarray(pixels, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef Py_ssize_t i
    cdef double x, y, z, Px, Py, Pz, dx, dy
    for i in range(n):
        x = X[i, 0]; y = X[i, 1]; z = X[i, 2]
        Px = Rm[0, 0] * x + Rm[0, 1] * y + Rm[0, 2] * z + tv[0]
        Py = Rm[1, 0] * x + Rm[1, 1] * y + Rm[1, 2] * z + tv[1]
        Pz = Rm[2, 0] * x + Rm[2, 1] * y + Rm[2, 2] * z + tv[2]
        if Pz > 0:
            dx = fx * Px / Pz + cx - U[i, 0]
            dy = fy * Py / Pz + cy - U[i, 1]
            out[i] = dx * dx + dy * dy
        else:
            out[i] = INFINITY
    return out


def pose_quality(R, t, points, pixels, group_id, Py_ssize_t n_groups,
                 double tau_sq, double fx, double fy, double cx, double cy,
                 cap=None):
    if n_groups == 0:
        return 0.0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e_sq = \
        reproject_sq_errors(R, t, points, pixels, fx, fy, cx, cy)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] gid = \
        np.ascontiguousarray(group_id, dtype=np.int64)
    cdef bint has_cap = cap is not None
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cap_arr = None
    if has_cap:
        cap_arr = np.ascontiguousarray(
            np.broadcast_to(cap, (e_sq.shape[0],)), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best = np.zeros(n_groups)
    cdef Py_ssize_t i, g
    cdef double kv, total
    for i in range(e_sq.shape[0]):
        if e_sq[i] == INFINITY:
            kv = -INFINITY
        else:
            kv = 1.0 - e_sq[i] / tau_sq
        if has_cap and cap_arr[i] < kv:
            kv = cap_arr[i]
        if kv < 0.0:
            kv = 0.0
        g = gid[i]
        if kv > best[g]:
            best[g] = kv
    total = 0.0
    for g in range(n_groups):
        total += best[g]
    return total / n_groups
