"""Rigid-body transforms.

A pose maps model coordinates to camera coordinates, x_cam = R x + t, with
rotations kept as 3x3 matrices throughout. Lengths are millimeters.
"""

import numpy as np

from .exceptions import ValidationError

ORTHONORMAL_TOL = 1e-9


def check_rotation(R, tol=ORTHONORMAL_TOL):
    """Validate that R is a proper rotation matrix.

    Orthonormality is required entrywise (|R^T R - I| <= tol) and the
    determinant must be +1 within tol; improper (reflective) matrices are
    rejected.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValidationError("rotation must be 3x3, got %r" % (R.shape,))
    if not np.all(np.isfinite(R)):
        raise ValidationError("rotation contains non-finite entries")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol:
        raise ValidationError(
            "rotation is not orthonormal (max |R^T R - I| = %.3e)" % err
        )
    det = np.linalg.det(R)
    if abs(det - 1.0) > max(tol, 1e-9):
        raise ValidationError("rotation has det %.12f, expected +1" % det)
    return R


class RigidPose:
    """Model-to-camera rigid transform [R | t].

    :param rotation: 3x3 proper rotation matrix.
    :param translation: 3-vector, millimeters.
    :param validate: skip invariant checks when False (internal fast path
        for matrices produced by our own solvers).
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation, validate=True):
        R = np.array(rotation, dtype=np.float64)
        t = np.array(translation, dtype=np.float64).reshape(3)
        if validate:
            R = check_rotation(R)
            if not np.all(np.isfinite(t)):
                raise ValidationError("translation contains non-finite entries")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def __setattr__(self, name, value):
        raise AttributeError("RigidPose is immutable")

    def __reduce__(self):
        # the immutability guard breaks slot-based pickling; rebuild through
        # the constructor instead
        return (RigidPose, (self.rotation, self.translation, False))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3), validate=False)

    def apply(self, points):
        """Transform one point (3,) or a stack of points (n, 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self):
        Rinv = self.rotation.T
        return RigidPose(Rinv, -Rinv @ self.translation, validate=False)

    def compose(self, other):
        """Return self o other: the pose that applies `other` first."""
        return RigidPose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            validate=False,
        )

    def __repr__(self):
        return "RigidPose(rotation=%s, translation=%s)" % (
            np.array2string(self.rotation, precision=6),
            np.array2string(self.translation, precision=6),
        )


def transform_point(x, pose):
    """Apply a rigid pose to a 3D point: rotation @ x + translation."""
    return pose.apply(x)


def rotation_angle(R):
    """Geodesic angle (radians) of a single rotation matrix.

    The trace argument is clamped to [-1, 1] so numerical noise at 0 and pi
    cannot produce NaN.
    """
    R = np.asarray(R, dtype=np.float64)
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_between(Ra, Rb):
    """Geodesic angle (radians) between two rotations."""
    Ra = np.asarray(Ra, dtype=np.float64)
    Rb = np.asarray(Rb, dtype=np.float64)
    return rotation_angle(Ra @ Rb.T)


def axis_angle_matrix(axis, angle):
    """Rodrigues rotation about `axis` (need not be unit) by `angle` radians."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValidationError("rotation axis must be nonzero")
    x, y, z = axis / n
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotvec_matrix(w):
    """Rotation matrix of a rotation vector (axis * angle). Zero maps to I."""
    w = np.asarray(w, dtype=np.float64)
    angle = np.linalg.norm(w)
    if angle < 1e-300:
        return np.eye(3)
    return axis_angle_matrix(w, angle)


def kabsch(src, dst, weights=None):
    """Best-fit rigid transform (R, t) minimizing sum w_i |R src_i + t - dst_i|^2.

    Returns a proper rotation (det +1) even when the unconstrained optimum is a
    reflection, by flipping the sign of the smallest singular direction.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValidationError("kabsch needs matching (n, 3) arrays")
    if src.shape[0] < 3:
        raise ValidationError("kabsch needs at least 3 points")
    if weights is None:
        w = np.ones(src.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    mu_s = w @ src
    mu_d = w @ dst
    H = (src - mu_s).T @ ((dst - mu_d) * w[:, None])
    U, _, Vt = np.linalg.svd(H)
    S = np.eye(3)
    if np.linalg.det(Vt.T @ U.T) < 0:
        S[2, 2] = -1.0
    R = Vt.T @ S @ U.T
    t = mu_d - R @ mu_s
    return R, t
