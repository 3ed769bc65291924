"""GC-RANSAC: PROSAC-guided hypothesize-and-verify with graph-cut local
optimization.

The estimator proposes poses from minimal P3P samples drawn with PROSAC,
scores them with the truncated-quadratic pose quality, and every time a new
so-far-the-best hypothesis appears it is polished by alternating a binary
inlier/outlier graph cut with EPnP + Levenberg-Marquardt refits.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import _kernels
from ..exceptions import (
    DegenerateSample,
    NearPlanarConfiguration,
    NoHypothesis,
    NoSolution,
    TooFewPoints,
)
from .correspond import CorrespondenceSet, build_neighborhood_graph
from .graphcut import solve_binary
from .sampling import ProsacSampler, is_degenerate_sample
from .solvers import epnp_solve, lm_refine, p3p_solve


@dataclass(frozen=True)
class FitConfig:
    """Parameters of the fitting stack (single- and multi-instance).

    Defaults follow the reference operating point: 4 px inlier threshold,
    400 iterations, 0.5 quality stop, 100 px^2 minimal-triangle area, 20
    neighborhood radius (px/cm mixed descriptor), 0.8 Jaccard gate, 0.5
    stop probability.
    """

    inlier_threshold: float = 4.0       # px, truncation of the error kernel
    max_iterations: int = 400           # proposal budget per instance
    quality_stop: float = 0.5           # early exit once quality reaches this
    min_triangle_area: float = 100.0    # px^2, minimal-sample degeneracy
    neighbor_radius: float = 20.0       # 5D descriptor radius (px / cm)
    spatial_weight: float = 0.1         # Potts weight of the graph cut
    label_cost_factor: float = 0.05     # PEARL per-label cost, fraction of n
    jaccard_threshold: float = 0.8      # proposal overlap gate
    stop_probability: float = 0.5       # halt when P(another instance) drops
    max_instances: Optional[int] = None
    max_proposals: int = 64             # hard safety cap on proposals
    local_opt_rounds: int = 10
    expansion_sweeps: int = 5
    seed: int = 0


@dataclass(eq=False)
class PoseHypothesis:
    """A fitted pose, its quality in [0, 1], and its inlier indices."""

    pose: object
    quality: float
    inliers: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __repr__(self):
        return "PoseHypothesis(quality=%.4f, inliers=%d)" % (
            self.quality, len(self.inliers),
        )


def _cut_labels(k_values, edges, spatial_weight):
    """Binary inlier labeling minimizing the unary+Potts energy."""
    n = k_values.shape[0]
    m = edges.shape[0]
    pair = np.zeros((m, 2, 2))
    pair[:, 0, 1] = spatial_weight
    pair[:, 1, 0] = spatial_weight
    labels = solve_binary(k_values, 1.0 - k_values, edges, pair)
    return labels.astype(bool)


def _labeling_energy(labels, k_values, edges, spatial_weight):
    e = float(np.where(labels, 1.0 - k_values, k_values).sum())
    if edges.shape[0]:
        e += spatial_weight * float(
            (labels[edges[:, 0]] != labels[edges[:, 1]]).sum()
        )
    return e


def gc_local_optimize(pose, corrs, cam, graph_edges=None, inlier_threshold=4.0,
                      spatial_weight=0.1, max_rounds=10, quality_of=None):
    """Polish a pose by alternating graph-cut inlier selection and refitting.

    Labeling minimizes sum_p U_p + lambda * (cut edges) exactly per round
    (s-t min cut); the refit (EPnP then LM on the selected inliers) is
    accepted only while the labeling energy keeps strictly decreasing, and
    the alternation stops when an inlier set repeats or after `max_rounds`.
    The returned pose is the best seen by `quality_of` (never worse than the
    input); the returned index array is its graph-cut inlier set.
    """
    cs = CorrespondenceSet.from_correspondences(corrs)
    if graph_edges is None:
        graph_edges = build_neighborhood_graph(cs, 20.0)
    tau_sq = inlier_threshold * inlier_threshold
    if quality_of is None:
        def quality_of(p):
            return _kernels.pose_quality(
                p.rotation, p.translation, cs.points, cs.pixels,
                cs.group_id, cs.n_groups, tau_sq,
                cam.fx, cam.fy, cam.cx, cam.cy, None,
            )

    def kernel_values(p):
        e_sq = cs.sq_errors(p, cam)
        return np.maximum(0.0, 1.0 - e_sq / tau_sq)

    best_pose = pose
    best_q = quality_of(pose)

    cur_pose = pose
    k_cur = kernel_values(cur_pose)
    labels = _cut_labels(k_cur, graph_edges, spatial_weight)
    energy = _labeling_energy(labels, k_cur, graph_edges, spatial_weight)
    seen = set()
    for _ in range(max_rounds):
        key = labels.tobytes()
        if key in seen:
            break
        seen.add(key)
        idx = np.nonzero(labels)[0]
        if idx.shape[0] < 3:
            break
        refit = cur_pose
        try:
            refit = epnp_solve(cs.points[idx], cs.pixels[idx], cam)
        except (TooFewPoints, NearPlanarConfiguration, NoSolution):
            pass
        refit, _ = lm_refine(refit, cs.points[idx], cs.pixels[idx], cam)
        q = quality_of(refit)
        if q > best_q:
            best_pose, best_q = refit, q
        k_new = kernel_values(refit)
        labels_new = _cut_labels(k_new, graph_edges, spatial_weight)
        e_new = _labeling_energy(labels_new, k_new, graph_edges, spatial_weight)
        if e_new >= energy - 1e-12:
            break
        cur_pose, k_cur, labels, energy = refit, k_new, labels_new, e_new

    final_labels = _cut_labels(kernel_values(best_pose), graph_edges,
                               spatial_weight)
    return best_pose, np.nonzero(final_labels)[0].astype(np.int64)


def gc_ransac(corrs, cam, config=None, rng=None, explained_sq=None,
              graph_edges=None):
    """Single-instance robust pose fit.

    PROSAC-ordered P3P proposals are screened for sample degeneracy, scored
    by pose quality (capped by `explained_sq` in the multi-instance setting),
    and each new best is locally optimized. Stops at the iteration budget or
    as soon as the quality reaches `config.quality_stop`.

    :param rng: numpy Generator; defaults to one seeded with config.seed.
    :param explained_sq: optional per-correspondence min squared error under
        already-accepted poses (enables the multi-instance quality).
    :raises TooFewPoints: fewer than 3 correspondences.
    :raises NoHypothesis: no sample produced a valid pose.
    """
    cs = CorrespondenceSet.from_correspondences(corrs)
    n = len(cs)
    if n < 3:
        raise TooFewPoints("gc_ransac needs at least 3 correspondences")
    if config is None:
        config = FitConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if graph_edges is None:
        graph_edges = build_neighborhood_graph(cs, config.neighbor_radius)
    tau_sq = config.inlier_threshold ** 2
    cap = None if explained_sq is None else explained_sq / tau_sq

    def quality_of(p):
        return _kernels.pose_quality(
            p.rotation, p.translation, cs.points, cs.pixels,
            cs.group_id, cs.n_groups, tau_sq,
            cam.fx, cam.fy, cam.cx, cam.cy, cap,
        )

    order = np.argsort(-cs.confidence, kind="stable")
    sampler = ProsacSampler(n, config.max_iterations)
    best_pose = None
    best_q = -1.0
    best_inliers = np.zeros(0, dtype=np.int64)

    for it in range(config.max_iterations):
        idx = order[sampler.sample(it, rng)]
        if is_degenerate_sample(cs.pixels[idx], cs.points[idx],
                                config.min_triangle_area):
            continue
        try:
            candidates = p3p_solve(cs.points[idx], cs.pixels[idx], cam)
        except (DegenerateSample, NoSolution):
            continue
        improved = False
        for pose in candidates:
            q = quality_of(pose)
            if q > best_q:
                best_pose, best_q = pose, q
                improved = True
        if improved:
            # polish every new so-far-the-best
            lo_pose, lo_inl = gc_local_optimize(
                best_pose, cs, cam, graph_edges,
                inlier_threshold=config.inlier_threshold,
                spatial_weight=config.spatial_weight,
                max_rounds=config.local_opt_rounds,
                quality_of=quality_of,
            )
            best_pose, best_q, best_inliers = lo_pose, quality_of(lo_pose), lo_inl
        if best_q >= config.quality_stop:
            break

    if best_pose is None:
        raise NoHypothesis("no valid pose hypothesis in %d iterations"
                           % config.max_iterations)
    return PoseHypothesis(best_pose, float(best_q), best_inliers)
