"""NumPy backend for the hot kernels. See package docstring for semantics."""

import numpy as np

_Z_EPS = 1e-9


def _edge_owns(ax, ay, bx, by):
    # boundary ownership: edges pointing down own their pixels; horizontal
    # edges pointing left own theirs (one triangle of each shared pair wins)
    dy = by - ay
    dx = bx - ax
    return dy > 0 or (dy == 0 and dx < 0)


def rasterize(points_cam, triangles, fx, fy, cx, cy, width, height,
              want_weights=False):
    pts = np.asarray(points_cam, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
    zbuf = np.zeros((height, width), dtype=np.float64)
    tri_idx = np.full((height, width), -1, dtype=np.int32)
    weights = np.zeros((height, width, 3), dtype=np.float64) if want_weights else None

    if tris.shape[0] == 0 or pts.shape[0] == 0:
        return zbuf, tri_idx, weights

    z = pts[:, 2]
    u = np.full(pts.shape[0], np.nan)
    v = np.full(pts.shape[0], np.nan)
    front = z > _Z_EPS
    u[front] = fx * pts[front, 0] / z[front] + cx
    v[front] = fy * pts[front, 1] / z[front] + cy

    for k in range(tris.shape[0]):
        i0, i1, i2 = tris[k]
        if not (front[i0] and front[i1] and front[i2]):
            continue
        x0, y0, x1, y1, x2, y2 = u[i0], v[i0], u[i1], v[i1], u[i2], v[i2]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        flipped = area2 < 0.0
        if flipped:  # reorder so edge functions are positive inside
            i1, i2 = i2, i1
            x1, y1, x2, y2 = x2, y2, x1, y1
            area2 = -area2
        xmin = max(int(np.ceil(min(x0, x1, x2))), 0)
        xmax = min(int(np.floor(max(x0, x1, x2))), width - 1)
        ymin = max(int(np.ceil(min(y0, y1, y2))), 0)
        ymax = min(int(np.floor(max(y0, y1, y2))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px = np.arange(xmin, xmax + 1, dtype=np.float64)
        py = np.arange(ymin, ymax + 1, dtype=np.float64)[:, None]
        # edge functions at every candidate pixel
        e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        in0 = (e0 > 0) | ((e0 == 0) & _edge_owns(x1, y1, x2, y2))
        in1 = (e1 > 0) | ((e1 == 0) & _edge_owns(x2, y2, x0, y0))
        in2 = (e2 > 0) | ((e2 == 0) & _edge_owns(x0, y0, x1, y1))
        covered = in0 & in1 & in2
        if not covered.any():
            continue
        l0 = e0 / area2
        l1 = e1 / area2
        l2 = e2 / area2
        inv_z = l0 / z[i0] + l1 / z[i1] + l2 / z[i2]
        z_pix = 1.0 / inv_z
        sub_z = zbuf[ymin : ymax + 1, xmin : xmax + 1]
        sub_t = tri_idx[ymin : ymax + 1, xmin : xmax + 1]
        better = covered & ((sub_t < 0) | (z_pix < sub_z))
        sub_z[better] = z_pix[better]
        sub_t[better] = k
        if want_weights:
            w0 = (l0 / z[i0]) / inv_z
            w1 = (l1 / z[i1]) / inv_z
            w2 = (l2 / z[i2]) / inv_z
            if flipped:  # report weights in the triangle's declared order
                w1, w2 = w2, w1
            sub_w = weights[ymin : ymax + 1, xmin : xmax + 1]
            sub_w[better, 0] = w0[better]
            sub_w[better, 1] = w1[better]
            sub_w[better, 2] = w2[better]
    return zbuf, tri_idx, weights


def reproject_sq_errors(R, t, points, pixels, fx, fy, cx, cy):
    P = points @ np.asarray(R, dtype=np.float64).T + np.asarray(t, dtype=np.float64)
    z = P[:, 2]
    out = np.full(points.shape[0], np.inf)
    ok = z > 0
    dx = fx * P[ok, 0] / z[ok] + cx - pixels[ok, 0]
    dy = fy * P[ok, 1] / z[ok] + cy - pixels[ok, 1]
    out[ok] = dx * dx + dy * dy
    return out


def pose_quality(R, t, points, pixels, group_id, n_groups, tau_sq,
                 fx, fy, cx, cy, cap=None):
    if n_groups == 0:
        return 0.0
    e_sq = reproject_sq_errors(R, t, points, pixels, fx, fy, cx, cy)
    k = 1.0 - e_sq / tau_sq  # e_sq = inf gives -inf, truncated below
    if cap is not None:
        k = np.minimum(k, cap)
    np.maximum(k, 0.0, out=k)
    best = np.zeros(n_groups, dtype=np.float64)
    np.maximum.at(best, group_id, k)
    return float(best.sum() / n_groups)
