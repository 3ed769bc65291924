"""Minimal and non-minimal PnP solvers plus Levenberg-Marquardt refinement.

All solvers take model points in millimeters and pixel observations, and
return model-to-camera poses. Points behind the camera, improper rotations
and spurious algebraic roots are filtered before anything is returned.
"""

import numpy as np

from ..exceptions import (
    DegenerateSample,
    NearPlanarConfiguration,
    NoSolution,
    TooFewPoints,
)
from ..geometry import RigidPose, kabsch, rotvec_matrix
from .. import _kernels

_P3P_RESIDUAL_PX = 1e-6


def _bearings(pixels, cam):
    f = np.empty((pixels.shape[0], 3))
    f[:, 0] = (pixels[:, 0] - cam.cx) / cam.fx
    f[:, 1] = (pixels[:, 1] - cam.cy) / cam.fy
    f[:, 2] = 1.0
    return f / np.linalg.norm(f, axis=1, keepdims=True)


def _polish_depths(s, cos_ab, cos_ag, cos_bg, a2, b2, c2):
    # Gauss-Newton on the three law-of-cosines residuals in the depths
    s = s.copy()
    for _ in range(12):
        s1, s2, s3 = s
        r = np.array(
            [
                s2 * s2 + s3 * s3 - 2 * s2 * s3 * cos_ab - a2,
                s1 * s1 + s3 * s3 - 2 * s1 * s3 * cos_bg - b2,
                s1 * s1 + s2 * s2 - 2 * s1 * s2 * cos_ag - c2,
            ]
        )
        J = np.array(
            [
                [0.0, 2 * s2 - 2 * s3 * cos_ab, 2 * s3 - 2 * s2 * cos_ab],
                [2 * s1 - 2 * s3 * cos_bg, 0.0, 2 * s3 - 2 * s1 * cos_bg],
                [2 * s1 - 2 * s2 * cos_ag, 2 * s2 - 2 * s1 * cos_ag, 0.0],
            ]
        )
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        s -= step
        if np.abs(step).max() < 1e-14 * max(1.0, np.abs(s).max()):
            break
    return s


def p3p_solve(points, pixels, cam):
    """Minimal three-point pose solver; up to four solutions.

    Every returned pose places all three points in front of the camera and
    reprojects them within 1e-6 px.

    :param points: (3, 3) model points (mm).
    :param pixels: (3, 2) observed pixels.
    :raises DegenerateSample: collinear model points or coincident pixels.
    :raises NoSolution: no pose satisfies the residual/cheirality filters.
    """
    X = np.asarray(points, dtype=np.float64).reshape(3, 3)
    U = np.asarray(pixels, dtype=np.float64).reshape(3, 2)
    e1, e2 = X[1] - X[0], X[2] - X[0]
    if np.linalg.norm(np.cross(e1, e2)) < 1e-9 * max(
        np.linalg.norm(e1) * np.linalg.norm(e2), 1e-300
    ):
        raise DegenerateSample("collinear 3D points")
    if (np.linalg.norm(U[0] - U[1]) < 1e-12 or np.linalg.norm(U[0] - U[2]) < 1e-12
            or np.linalg.norm(U[1] - U[2]) < 1e-12):
        raise DegenerateSample("coincident pixels")

    f = _bearings(U, cam)
    cos_ab = float(f[1] @ f[2])  # angle opposite side a = |X2 - X3|
    cos_bg = float(f[0] @ f[2])  # opposite b = |X1 - X3|
    cos_ag = float(f[0] @ f[1])  # opposite c = |X1 - X2|
    a2 = float(((X[1] - X[2]) ** 2).sum())
    b2 = float(((X[0] - X[2]) ** 2).sum())
    c2 = float(((X[0] - X[1]) ** 2).sum())

    # Grunert's system with s2 = u*s1, s3 = v*s1 eliminates s1, leaving two
    # quadratics in u whose coefficients are quadratics in v:
    #   b2*u^2 - 2*b2*cos_ab*v*u + (b2*v^2 - a2*(1 + v^2 - 2*cos_bg*v)) = 0
    #   b2*u^2 - 2*b2*cos_ag*u   + (b2 - c2*(1 + v^2 - 2*cos_bg*v))     = 0
    # Their resultant in u is a quartic in v. Coefficient arrays are numpy
    # polynomials, highest degree first.
    w = np.array([-a2, 2.0 * a2 * cos_bg, -a2])  # -a2*(1 + v^2 - 2 cos_bg v)
    p2 = np.array([b2])
    p1 = np.array([-2.0 * b2 * cos_ab, 0.0])  # in v
    p0 = np.polyadd(np.array([b2, 0.0, 0.0]), w)
    q2 = np.array([b2])
    q1 = np.array([-2.0 * b2 * cos_ag])
    q0 = np.polyadd(np.array([b2]), (c2 / a2) * w)
    res = np.polysub(
        np.polymul(np.polysub(np.polymul(p2, q0), np.polymul(p0, q2)),
                   np.polysub(np.polymul(p2, q0), np.polymul(p0, q2))),
        np.polymul(np.polysub(np.polymul(p1, q0), np.polymul(p0, q1)),
                   np.polysub(np.polymul(p2, q1), np.polymul(p1, q2))),
    )
    res = np.trim_zeros(res, "f")
    if res.size == 0:
        raise NoSolution("degenerate resultant")
    roots = np.roots(res)
    mag = np.abs(roots)
    real = roots[np.abs(roots.imag) < 1e-6 * (1.0 + mag)].real

    poses = []
    seen = []
    for v in np.sort(real):
        if v <= 0:
            continue
        # u from the difference of the two quadratics (equal u^2 terms)
        den = np.polyval(np.polysub(p1, q1), v)
        num = np.polyval(np.polysub(q0, p0), v)
        if abs(den) < 1e-12 * max(abs(num), 1.0):
            continue
        u = num / den
        if u <= 0:
            continue
        rad = 1.0 + u * u - 2.0 * u * cos_ag
        if rad <= 0:
            continue
        s1 = np.sqrt(c2 / rad)
        s = _polish_depths(
            np.array([s1, u * s1, v * s1]), cos_ab, cos_ag, cos_bg, a2, b2, c2
        )
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            continue
        Y = f * s[:, None]
        R, t = kabsch(X, Y)
        e_sq = _kernels.reproject_sq_errors(
            R, t, X, U, cam.fx, cam.fy, cam.cx, cam.cy
        )
        if not np.all(e_sq < _P3P_RESIDUAL_PX * _P3P_RESIDUAL_PX):
            continue
        dup = False
        for R0, t0 in seen:
            if np.abs(R - R0).max() < 1e-9 and np.abs(t - t0).max() < 1e-6:
                dup = True
                break
        if dup:
            continue
        seen.append((R, t))
        poses.append(RigidPose(R, t, validate=False))
    if not poses:
        raise NoSolution("no pose passed the residual and cheirality filters")
    return poses


def _epnp_betas_case1(L, rho):
    # betas ~ [b11, b12, b13, b14]; approx using the first kernel vector only
    b11 = np.linalg.lstsq(L[:, :1], rho, rcond=None)[0][0]
    b1 = np.sqrt(abs(b11))
    return np.array([b1, 0.0, 0.0, 0.0])


def _epnp_betas_case2(L, rho):
    # unknowns [b11, b12, b22]
    cols = L[:, [0, 1, 4]]
    b = np.linalg.lstsq(cols, rho, rcond=None)[0]
    b1 = np.sqrt(abs(b[0]))
    b2 = np.sqrt(abs(b[2]))
    if b[1] < 0:
        b2 = -b2
    return np.array([b1, b2, 0.0, 0.0])


def _epnp_betas_case3(L, rho):
    # unknowns [b11, b12, b22, b13, b23]
    cols = L[:, [0, 1, 4, 2, 5]]
    b = np.linalg.lstsq(cols, rho, rcond=None)[0]
    b1 = np.sqrt(abs(b[0]))
    b2 = np.sqrt(abs(b[2]))
    if b[1] < 0:
        b2 = -b2
    b3 = b[3] / b1 if b1 > 1e-12 else 0.0
    return np.array([b1, b2, b3, 0.0])


def _epnp_gauss_newton(betas, L, rho):
    b = betas.copy()
    pairs = [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3),
             (2, 2), (2, 3), (3, 3)]
    for _ in range(15):
        bb = np.array([b[i] * b[j] for i, j in pairs])
        r = L @ bb - rho
        J = np.zeros((6, 4))
        for col, (i, j) in enumerate(pairs):
            J[:, i] += L[:, col] * b[j]
            J[:, j] += L[:, col] * b[i]
        try:
            step = np.linalg.lstsq(J, r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        b -= step
        if np.abs(step).max() < 1e-14:
            break
    return b


def epnp_solve(points, pixels, cam):
    """EPnP pose from n >= 4 correspondences (least-squares, non-minimal).

    :raises TooFewPoints: fewer than 4 correspondences.
    :raises NearPlanarConfiguration: 3D points coplanar within tolerance
        (smallest/largest covariance eigenvalue ratio below 1e-8).
    """
    X = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    U = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    n = X.shape[0]
    if n < 4:
        raise TooFewPoints("EPnP needs at least 4 points, got %d" % n)

    centroid = X.mean(axis=0)
    Xc = X - centroid
    cov = Xc.T @ Xc / n
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[2] <= 0 or evals[0] / evals[2] < 1e-8:
        raise NearPlanarConfiguration(
            "3D points are (near-)coplanar; eigenvalue ratio %.3e"
            % (evals[0] / evals[2] if evals[2] > 0 else 0.0)
        )
    # control points: centroid plus principal directions
    ctrl = np.empty((4, 3))
    ctrl[0] = centroid
    for i in range(3):
        ctrl[i + 1] = centroid + np.sqrt(evals[2 - i]) * evecs[:, 2 - i]

    # barycentric coordinates of every point in the control frame
    A = (ctrl[1:] - ctrl[0]).T
    w = np.linalg.solve(A, Xc.T).T
    alphas = np.column_stack([1.0 - w.sum(axis=1), w])

    M = np.zeros((2 * n, 12))
    for j in range(4):
        M[0::2, 3 * j + 0] = alphas[:, j] * cam.fx
        M[0::2, 3 * j + 2] = alphas[:, j] * (cam.cx - U[:, 0])
        M[1::2, 3 * j + 1] = alphas[:, j] * cam.fy
        M[1::2, 3 * j + 2] = alphas[:, j] * (cam.cy - U[:, 1])
    _, _, Vt = np.linalg.svd(M, full_matrices=False)
    kernel = Vt[::-1][:4]  # rows: kernel vectors, most-null first

    # squared distances between control points, and the L matrix relating
    # beta products to them
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    rho = np.array([((ctrl[i] - ctrl[j]) ** 2).sum() for i, j in pairs])
    V = kernel.reshape(4, 4, 3)  # [kernel vector, control point, xyz]
    dv = np.stack([V[:, i] - V[:, j] for i, j in pairs], axis=0)  # (6, 4, 3)
    prod_pairs = [(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3),
                  (2, 2), (2, 3), (3, 3)]
    L = np.empty((6, 10))
    for col, (i, j) in enumerate(prod_pairs):
        dot = (dv[:, i] * dv[:, j]).sum(axis=1)
        L[:, col] = dot if i == j else 2.0 * dot

    best = None
    for guess in (_epnp_betas_case1(L, rho), _epnp_betas_case2(L, rho),
                  _epnp_betas_case3(L, rho)):
        betas = _epnp_gauss_newton(guess, L, rho)
        ctrl_cam = np.tensordot(betas, V, axes=1)  # (4, 3)
        pts_cam = alphas @ ctrl_cam
        if pts_cam[:, 2].mean() < 0:
            pts_cam = -pts_cam
        if np.any(pts_cam[:, 2] <= 0):
            continue
        R, t = kabsch(X, pts_cam)
        e_sq = _kernels.reproject_sq_errors(
            R, t, X, U, cam.fx, cam.fy, cam.cx, cam.cy
        )
        cost = float(e_sq.sum())
        if not np.isfinite(cost):
            continue
        if best is None or cost < best[0]:
            best = (cost, R, t)
    if best is None:
        raise NoSolution("EPnP produced no cheirality-consistent pose")
    return RigidPose(best[1], best[2], validate=False)


def lm_refine(pose, points, pixels, cam, max_iterations=50, rel_tol=1e-9):
    """Levenberg-Marquardt refinement of a pose on fixed correspondences.

    Minimizes the sum of squared reprojection errors; the returned pose never
    has a higher cost than the input. Rotation updates are left-multiplied
    rotation vectors.

    :raises TooFewPoints: fewer than 3 correspondences.
    """
    X = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    U = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    if X.shape[0] < 3:
        raise TooFewPoints("LM needs at least 3 points, got %d" % X.shape[0])

    def cost_of(R, t):
        e = _kernels.reproject_sq_errors(R, t, X, U, cam.fx, cam.fy, cam.cx, cam.cy)
        return float(e.sum())

    R = pose.rotation.copy()
    t = pose.translation.copy()
    cost = cost_of(R, t)
    best = (cost, R, t)
    if not np.isfinite(cost):
        return pose, cost  # nothing sensible to do from here
    mu = 1e-3
    for _ in range(max_iterations):
        Y = X @ R.T + t
        z = Y[:, 2]
        if np.any(z <= 0):
            break
        inv_z = 1.0 / z
        # residuals and Jacobian wrt (rotation vector, translation)
        px = cam.fx * Y[:, 0] * inv_z + cam.cx
        py = cam.fy * Y[:, 1] * inv_z + cam.cy
        r = np.column_stack([px - U[:, 0], py - U[:, 1]]).ravel()
        RX = Y - t  # rotated model points
        J = np.empty((2 * X.shape[0], 6))
        du = np.zeros((X.shape[0], 2, 3))
        du[:, 0, 0] = cam.fx * inv_z
        du[:, 0, 2] = -cam.fx * Y[:, 0] * inv_z * inv_z
        du[:, 1, 1] = cam.fy * inv_z
        du[:, 1, 2] = -cam.fy * Y[:, 1] * inv_z * inv_z
        # d(exp(w) RX)/dw at w=0 is -[RX]_x
        skew = np.zeros((X.shape[0], 3, 3))
        skew[:, 0, 1] = -RX[:, 2]
        skew[:, 0, 2] = RX[:, 1]
        skew[:, 1, 0] = RX[:, 2]
        skew[:, 1, 2] = -RX[:, 0]
        skew[:, 2, 0] = -RX[:, 1]
        skew[:, 2, 1] = RX[:, 0]
        J[:, :3] = np.einsum("nij,njk->nik", du, -skew).reshape(-1, 3)
        J[:, 3:] = du.reshape(-1, 3)
        JtJ = J.T @ J
        g = J.T @ r
        accepted = False
        for _ in range(8):
            H = JtJ + mu * np.diag(np.diag(JtJ))
            try:
                delta = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            R_new = rotvec_matrix(delta[:3]) @ R
            t_new = t + delta[3:]
            c_new = cost_of(R_new, t_new)
            if c_new < cost:
                R, t, prev = R_new, t_new, cost
                cost = c_new
                mu = max(mu / 3.0, 1e-12)
                accepted = True
                if cost < best[0]:
                    best = (cost, R, t)
                break
            mu *= 4.0
        if not accepted:
            break
        if prev - cost <= rel_tol * max(prev, 1e-300):
            break
    cost, R, t = best
    return RigidPose(R, t, validate=False), cost
