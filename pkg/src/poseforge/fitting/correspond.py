"""2D-3D correspondences, reprojection errors, and pose quality functions.

A correspondence links one pixel u to one candidate 3D model point x with a
confidence s. Several correspondences may share a pixel (many-to-many links);
the quality functions aggregate per *pixel*, keeping only the best-explained
link at each one.
"""

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..exceptions import ValidationError


@dataclass(frozen=True)
class Correspondence:
    """One 2D-3D link: pixel (px), model point (mm), confidence in (0, 1]."""

    pixel: tuple
    point: tuple
    confidence: float


class CorrespondenceSet:
    """Column-packed correspondences plus the pixel grouping.

    Pixels sharing exact coordinates form one group; quality functions
    average over groups (the set U_o of distinct pixels), not over
    individual correspondences.
    """

    __slots__ = ("pixels", "points", "confidence", "group_id", "n_groups",
                 "_descriptors")

    def __init__(self, pixels, points, confidence):
        pixels = np.ascontiguousarray(pixels, dtype=np.float64).reshape(-1, 2)
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        confidence = np.ascontiguousarray(confidence, dtype=np.float64).reshape(-1)
        n = pixels.shape[0]
        if points.shape[0] != n or confidence.shape[0] != n:
            raise ValidationError("pixels, points, confidence lengths differ")
        if n and (confidence.min() <= 0.0 or confidence.max() > 1.0):
            raise ValidationError("confidences must lie in (0, 1]")
        if n:
            uniq, inverse = np.unique(pixels, axis=0, return_inverse=True)
            group_id = np.ascontiguousarray(inverse.reshape(-1), dtype=np.int32)
            n_groups = uniq.shape[0]
        else:
            group_id = np.zeros(0, dtype=np.int32)
            n_groups = 0
        self.pixels = pixels
        self.points = points
        self.confidence = confidence
        self.group_id = group_id
        self.n_groups = n_groups
        self._descriptors = None

    @classmethod
    def from_correspondences(cls, corrs):
        if isinstance(corrs, CorrespondenceSet):
            return corrs
        corrs = list(corrs)
        if not corrs:
            return cls(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros(0))
        return cls(
            np.array([c.pixel for c in corrs], dtype=np.float64),
            np.array([c.point for c in corrs], dtype=np.float64),
            np.array([c.confidence for c in corrs], dtype=np.float64),
        )

    def __len__(self):
        return self.pixels.shape[0]

    def __getitem__(self, i):
        return Correspondence(
            tuple(self.pixels[i]), tuple(self.points[i]), float(self.confidence[i])
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def descriptors(self):
        """5D descriptors (u, v in px; x, y, z in cm) for the neighborhood graph."""
        if self._descriptors is None:
            d = np.empty((len(self), 5))
            d[:, :2] = self.pixels
            d[:, 2:] = self.points / 10.0  # mm -> cm
            self._descriptors = d
        return self._descriptors

    def sq_errors(self, pose, cam):
        """Squared reprojection errors under `pose`; +inf behind the camera."""
        return _kernels.reproject_sq_errors(
            pose.rotation, pose.translation, self.points, self.pixels,
            cam.fx, cam.fy, cam.cx, cam.cy,
        )


def reprojection_error(corr, pose, cam):
    """Pixel reprojection error under `pose`; +inf behind the camera.

    Accepts a single correspondence (returns a float) or a whole set
    (returns an array, one entry per correspondence).
    """
    if isinstance(corr, CorrespondenceSet):
        return np.sqrt(corr.sq_errors(pose, cam))
    cs = CorrespondenceSet.from_correspondences([corr])
    return float(np.sqrt(cs.sq_errors(pose, cam)[0]))


def quality_single(pose, corrs, cam, tau_r=4.0):
    """Single-instance pose quality, in [0, 1].

    Mean over distinct pixels of the best truncated-quadratic score
    max(0, 1 - e^2/tau_r^2) among the correspondences at that pixel.
    Empty input gives 0 by convention.
    """
    cs = CorrespondenceSet.from_correspondences(corrs)
    if len(cs) == 0:
        return 0.0
    return _kernels.pose_quality(
        pose.rotation, pose.translation, cs.points, cs.pixels,
        cs.group_id, cs.n_groups, tau_r * tau_r,
        cam.fx, cam.fy, cam.cx, cam.cy, None,
    )


def min_sq_errors_over(poses, corrs, cam):
    """Per-correspondence minimum squared reprojection error over `poses`.

    Empty pose list gives +inf everywhere (nothing is explained yet).
    """
    cs = CorrespondenceSet.from_correspondences(corrs)
    best = np.full(len(cs), np.inf)
    for pose in poses:
        np.minimum(best, cs.sq_errors(pose, cam), out=best)
    return best


def quality_multi(pose, corrs, hypotheses, cam, tau_r=4.0, explained_sq=None):
    """Multi-instance pose quality, in [0, 1].

    Like quality_single but each correspondence's score is capped by
    e'^2/tau_r^2, where e' is its best reprojection error under the already
    accepted hypotheses: links that an existing pose explains contribute
    nothing, steering proposals toward unexplained data.

    :param hypotheses: iterable of RigidPose (or objects with .pose).
    :param explained_sq: optional precomputed min-squared-error array
        (overrides `hypotheses`).
    """
    cs = CorrespondenceSet.from_correspondences(corrs)
    if len(cs) == 0:
        return 0.0
    if explained_sq is None:
        poses = [getattr(h, "pose", h) for h in hypotheses]
        explained_sq = min_sq_errors_over(poses, cs, cam)
    tau_sq = tau_r * tau_r
    with np.errstate(invalid="ignore"):
        cap = explained_sq / tau_sq  # inf / tau_sq stays inf
    return _kernels.pose_quality(
        pose.rotation, pose.translation, cs.points, cs.pixels,
        cs.group_id, cs.n_groups, tau_sq,
        cam.fx, cam.fy, cam.cx, cam.cy, cap,
    )


def build_neighborhood_graph(corrs, tau_d=20.0):
    """Undirected edges between correspondences with close 5D descriptors.

    Descriptor: pixel coordinates in px, model coordinates in cm. An edge
    links i < j iff the Euclidean descriptor distance is strictly below
    tau_d. Returns an (m, 2) int array of index pairs.
    """
    if tau_d <= 0:
        raise ValidationError("tau_d must be positive")
    cs = CorrespondenceSet.from_correspondences(corrs)
    n = len(cs)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    from scipy.spatial import cKDTree

    d = cs.descriptors()
    pairs = cKDTree(d).query_pairs(tau_d, output_type="ndarray")
    if pairs.shape[0] == 0:
        return pairs.astype(np.int64).reshape(0, 2)
    # query_pairs uses <=; the graph wants strictly-below
    dist_sq = ((d[pairs[:, 0]] - d[pairs[:, 1]]) ** 2).sum(axis=1)
    pairs = pairs[dist_sq < tau_d * tau_d]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return np.ascontiguousarray(pairs[order], dtype=np.int64)
