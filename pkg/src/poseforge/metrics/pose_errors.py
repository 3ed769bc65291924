"""Pose-error functions.

Pointwise errors over model vertices (TE, RE, ADD, ADI), symmetry-aware
surface deviations (MSSD in 3D, MSPD in the image), and the depth-based
visible surface discrepancy (VSD). Conventions:

- translations and vertices in millimeters, image errors in pixels,
  rotations as 3x3 matrices,
- an estimate placing vertices behind the camera scores +inf on image-space
  errors rather than raising,
- VSD follows the distance-map formulation: the error is the fraction of the
  union of visibility masks where the two renderings disagree (pixel not
  shared, or distance gap >= tau).
"""

import numpy as np
from scipy.spatial import cKDTree

from ..exceptions import DimensionMismatch, EmptyModel
from ..rendering import DELTA_MM, render_distance_map, visibility_masks

VSD_TAU_MM = 20.0


def _vertices(model):
    """Accept a TriangleMesh or a raw (n, 3) vertex array."""
    pts = getattr(model, "vertices", model)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise EmptyModel("no vertices to evaluate")
    return pts


def e_te(t_est, t_gt):
    """Translation error: euclidean distance in mm."""
    t_est = np.asarray(t_est, dtype=np.float64).reshape(3)
    t_gt = np.asarray(t_gt, dtype=np.float64).reshape(3)
    return float(np.linalg.norm(t_gt - t_est))


def e_re(R_est, R_gt):
    """Rotation error: angle of R_est * R_gt^-1 in radians.

    The arccos argument is clamped to [-1, 1] to absorb floating-point
    drift; the result is symmetric in its arguments and bounded by pi.
    """
    R_est = np.asarray(R_est, dtype=np.float64)
    R_gt = np.asarray(R_gt, dtype=np.float64)
    c = (np.trace(R_est @ R_gt.T) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def e_add(pose_est, pose_gt, model):
    """Average distance between corresponding transformed vertices (mm)."""
    pts = _vertices(model)
    return float(np.linalg.norm(pose_gt.apply(pts) - pose_est.apply(pts),
                                axis=1).mean())


def e_adi(pose_est, pose_gt, model):
    """Average distance to the closest transformed vertex (mm).

    The indistinguishable-views variant of ADD: each ground-truth vertex is
    matched to the nearest estimated vertex. A KD-tree replaces the O(n^2)
    scan; results are identical.
    """
    pts = _vertices(model)
    est = pose_est.apply(pts)
    gt = pose_gt.apply(pts)
    d, _ = cKDTree(est).query(gt)
    return float(d.mean())


def _compose_symmetry(pose_gt, sym):
    # ground-truth pose acting on a symmetry-transformed model
    return (pose_gt.rotation @ sym.rotation,
            pose_gt.rotation @ sym.translation + pose_gt.translation)


def e_mssd(pose_est, pose_gt, symmetries, model):
    """Maximum symmetry-aware surface distance (mm).

    min over symmetry transforms S of max over vertices x of
    |P_est x - P_gt S x|.

    :param symmetries: iterable of RigidPose; must contain the identity for
        the plain (symmetry-free) error to participate.
    """
    pts = _vertices(model)
    est = pose_est.apply(pts)
    best = np.inf
    for sym in symmetries:
        R, t = _compose_symmetry(pose_gt, sym)
        target = pts @ R.T + t
        dev = float(np.linalg.norm(est - target, axis=1).max())
        if dev < best:
            best = dev
    return best


def _project_or_none(pts, R, t, cam):
    cam_pts = pts @ R.T + t
    z = cam_pts[:, 2]
    if np.any(z <= 0):
        return None
    u = np.empty((pts.shape[0], 2))
    u[:, 0] = cam.fx * cam_pts[:, 0] / z + cam.cx
    u[:, 1] = cam.fy * cam_pts[:, 1] / z + cam.cy
    return u


def e_mspd(pose_est, pose_gt, symmetries, model, cam):
    """Maximum symmetry-aware projection distance (px).

    Same structure as e_mssd but measured between projected vertices, so
    alignment along the viewing ray is not penalized. A symmetry candidate
    that puts any vertex at or behind the camera (in either pose) scores
    +inf, keeping the min well-defined.
    """
    pts = _vertices(model)
    u_est = _project_or_none(pts, pose_est.rotation, pose_est.translation, cam)
    if u_est is None:
        return np.inf
    best = np.inf
    for sym in symmetries:
        R, t = _compose_symmetry(pose_gt, sym)
        u_gt = _project_or_none(pts, R, t, cam)
        if u_gt is None:
            continue
        dev = float(np.linalg.norm(u_est - u_gt, axis=1).max())
        if dev < best:
            best = dev
    return best


def vsd_pair_stats(dist_est, dist_gt, dist_img, delta=DELTA_MM):
    """Reduce one estimate/ground-truth rendering pair for VSD tau sweeps.

    :returns: (n_union, diffs) where n_union is the pixel count of the union
        of the two visibility masks and diffs the absolute distance gaps on
        their intersection. e_vsd(tau) = 1 - count(diffs < tau) / n_union,
        and 1.0 by convention when the union is empty.
    """
    v_est, v_gt = visibility_masks(dist_est, dist_gt, dist_img, delta)
    union = v_est.data | v_gt.data
    inter = v_est.data & v_gt.data
    d_est = np.asarray(dist_est, dtype=np.float64)
    d_gt = np.asarray(dist_gt, dtype=np.float64)
    diffs = np.abs(d_est[inter] - d_gt[inter])
    return int(np.count_nonzero(union)), diffs


def e_vsd(pose_est, pose_gt, mesh, cam, dist_img, tau=VSD_TAU_MM,
          delta=DELTA_MM):
    """Visible surface discrepancy in [0, 1].

    Renders the model in both poses, derives visibility against the measured
    scene distance map, and scores the fraction of the mask union where the
    surfaces disagree: the pixel is not in both masks, or the camera-center
    distances differ by at least `tau` mm. Empty union scores 1 by
    convention.

    :param dist_img: measured scene distance map (mm, 0 = unknown).
    :param tau: misalignment tolerance in mm; may be a sequence, in which
        case an array of errors (one per tolerance) is returned from a
        single pair of renderings.
    :raises DimensionMismatch: if dist_img does not match the camera size.
    """
    d_img = np.asarray(dist_img, dtype=np.float64)
    if d_img.shape != (cam.height, cam.width):
        raise DimensionMismatch(
            "scene distance map %s does not match camera %dx%d"
            % (d_img.shape, cam.width, cam.height))
    d_est = render_distance_map(mesh, pose_est, cam)
    d_gt = render_distance_map(mesh, pose_gt, cam)
    n_union, diffs = vsd_pair_stats(d_est, d_gt, d_img, delta)
    taus = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    if n_union == 0:
        errs = np.ones(taus.shape)
    else:
        errs = 1.0 - (diffs[None, :] < taus[:, None]).sum(axis=1) / n_union
    return errs if np.ndim(tau) else float(errs[0])
