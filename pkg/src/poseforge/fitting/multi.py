"""Progressive multi-instance fitting: propose, gate, consolidate.

Instances are found one at a time by GC-RANSAC runs whose quality function
discounts correspondences already explained by accepted poses. A proposal
joins the hypothesis set only if its inliers overlap the set's inliers
little enough (Jaccard gate); after every acceptance the whole set is
consolidated PEARL-style — alternating a multi-label alpha-expansion
assignment with per-hypothesis refits — and hypotheses left without
assigned correspondences are dropped. The loop halts once the estimated
probability of another undiscovered instance falls below a threshold.
"""

import numpy as np

from .. import _kernels
from ..exceptions import (
    NearPlanarConfiguration,
    NoHypothesis,
    NoSolution,
    TooFewPoints,
)
from .correspond import CorrespondenceSet, build_neighborhood_graph, min_sq_errors_over
from .graphcut import solve_binary
from .ransac import FitConfig, PoseHypothesis, gc_ransac
from .solvers import epnp_solve, lm_refine

OUTLIER = -1


def jaccard_inliers(inliers, hypotheses):
    """Jaccard overlap between an inlier set and a hypothesis set's inliers.

    :param inliers: index array of the proposal's inliers.
    :param hypotheses: list of PoseHypothesis (their union is compared), or
        a plain index array.
    :returns: |A ∩ B| / |A ∪ B|; 0 when both sides are empty.
    """
    a = np.unique(np.asarray(inliers, dtype=np.int64))
    if hasattr(hypotheses, "dtype") or not all(
        hasattr(h, "inliers") for h in hypotheses
    ):
        b = np.unique(np.asarray(hypotheses, dtype=np.int64).reshape(-1))
    else:
        sets = [np.asarray(h.inliers, dtype=np.int64) for h in hypotheses]
        b = (np.unique(np.concatenate(sets)) if sets
             else np.zeros(0, dtype=np.int64))
    union = np.union1d(a, b).shape[0]
    if union == 0:
        return 0.0
    return float(np.intersect1d(a, b).shape[0] / union)


def _assignment_energy(labels, data, edges, lam, beta):
    """Total PEARL energy: data + Potts smoothing + per-label costs."""
    n = labels.shape[0]
    idx = np.arange(n)
    d = np.where(labels >= 0, data[np.maximum(labels, 0), idx], 1.0)
    e = float(d.sum())
    if edges.shape[0]:
        e += lam * float((labels[edges[:, 0]] != labels[edges[:, 1]]).sum())
    used = np.unique(labels[labels >= 0]).shape[0]
    return e + beta * used


def _expansion_move(labels, alpha, data, edges, lam):
    """One alpha-expansion: each point may keep its label or switch to alpha."""
    n = labels.shape[0]
    idx = np.arange(n)
    cost_keep = np.where(labels >= 0, data[np.maximum(labels, 0), idx], 1.0)
    cost_take = data[alpha] if alpha != OUTLIER else np.ones(n)
    m = edges.shape[0]
    if m:
        lp = labels[edges[:, 0]]
        lq = labels[edges[:, 1]]
        pair = np.zeros((m, 2, 2))
        pair[:, 0, 0] = lam * (lp != lq)
        pair[:, 0, 1] = lam * (lp != alpha)
        pair[:, 1, 0] = lam * (lq != alpha)
    else:
        pair = np.zeros((0, 2, 2))
    take = solve_binary(cost_keep, cost_take, edges, pair).astype(bool)
    out = labels.copy()
    out[take] = alpha
    return out


def pearl_consolidate(hypotheses, corrs, cam, config, graph_edges=None):
    """PEARL refinement of a hypothesis set.

    Alternates (i) a joint assignment of every correspondence to one
    hypothesis or the outlier label — alpha-expansion over the neighborhood
    graph with data cost min(1, e^2/tau_r^2), outlier cost 1, Potts weight
    `spatial_weight` and a per-used-label cost — and (ii) an EPnP+LM refit
    of each hypothesis on its assigned points. Moves and refits are accepted
    only if they strictly lower the exact total energy, so the energy is
    non-increasing by construction. Hypotheses with no assigned points are
    dropped.

    :returns: (new hypothesis list, final label array with -1 = outlier).
    """
    cs = CorrespondenceSet.from_correspondences(corrs)
    n = len(cs)
    if graph_edges is None:
        graph_edges = build_neighborhood_graph(cs, config.neighbor_radius)
    k = len(hypotheses)
    if k == 0 or n == 0:
        return list(hypotheses), np.full(n, OUTLIER, dtype=np.int64)
    tau_sq = config.inlier_threshold ** 2
    lam = config.spatial_weight
    beta = config.label_cost_factor * n

    poses = [h.pose for h in hypotheses]
    data = np.empty((k, n))
    for h in range(k):
        data[h] = np.minimum(cs.sq_errors(poses[h], cam) / tau_sq, 1.0)

    labels = np.full(n, OUTLIER, dtype=np.int64)
    energy = _assignment_energy(labels, data, graph_edges, lam, beta)
    for _ in range(5):  # outer assignment/refit rounds
        # (i) alpha-expansion to a local minimum of the assignment energy
        for _ in range(config.expansion_sweeps):
            changed = False
            for alpha in list(range(k)) + [OUTLIER]:
                cand = _expansion_move(labels, alpha, data, graph_edges, lam)
                e_cand = _assignment_energy(cand, data, graph_edges, lam, beta)
                if e_cand < energy - 1e-12:
                    labels, energy = cand, e_cand
                    changed = True
            if not changed:
                break
        # (ii) refit hypotheses on their assigned points
        any_refit = False
        for h in range(k):
            member = labels == h
            if member.sum() < 4:
                continue
            try:
                refit = epnp_solve(cs.points[member], cs.pixels[member], cam)
            except (TooFewPoints, NearPlanarConfiguration, NoSolution):
                refit = poses[h]
            refit, _ = lm_refine(refit, cs.points[member], cs.pixels[member], cam)
            new_data = np.minimum(cs.sq_errors(refit, cam) / tau_sq, 1.0)
            gain = data[h][member].sum() - new_data[member].sum()
            if gain > 1e-12:
                poses[h] = refit
                data[h] = new_data
                energy -= gain
                any_refit = True
        if not any_refit:
            break

    kept = []
    relabel = np.full(k, OUTLIER, dtype=np.int64)
    for h in range(k):
        member = np.nonzero(labels == h)[0]
        if member.shape[0] == 0:
            continue  # no support left: dropped
        relabel[h] = len(kept)
        q = _kernels.pose_quality(
            poses[h].rotation, poses[h].translation, cs.points, cs.pixels,
            cs.group_id, cs.n_groups, tau_sq,
            cam.fx, cam.fy, cam.cx, cam.cy, None,
        )
        kept.append(PoseHypothesis(poses[h], float(q),
                                   member.astype(np.int64)))
    out_labels = np.where(labels >= 0, relabel[np.maximum(labels, 0)], OUTLIER)
    return kept, out_labels


def progressive_x(corrs, cam, config=None):
    """Multi-instance pose fitting; returns hypotheses sorted by quality.

    :raises TooFewPoints: fewer than 3 correspondences.
    """
    cs = CorrespondenceSet.from_correspondences(corrs)
    n = len(cs)
    if n < 3:
        raise TooFewPoints("progressive_x needs at least 3 correspondences")
    if config is None:
        config = FitConfig()
    rng = np.random.default_rng(config.seed)
    graph_edges = build_neighborhood_graph(cs, config.neighbor_radius)
    tau_sq = config.inlier_threshold ** 2

    hypotheses = []
    for _ in range(config.max_proposals):
        explained = (min_sq_errors_over([h.pose for h in hypotheses], cs, cam)
                     if hypotheses else None)
        try:
            proposal = gc_ransac(cs, cam, config, rng=rng,
                                 explained_sq=explained,
                                 graph_edges=graph_edges)
        except NoHypothesis:
            break
        if explained is None:
            unexplained = proposal.inliers.shape[0]
        else:
            unexplained = int((explained[proposal.inliers] >= tau_sq).sum())
        if jaccard_inliers(proposal.inliers, hypotheses) < config.jaccard_threshold:
            hypotheses.append(proposal)
            if (config.max_instances is not None
                    and len(hypotheses) >= config.max_instances):
                break
            hypotheses, _ = pearl_consolidate(hypotheses, cs, cam, config,
                                              graph_edges)
        # estimated probability that an unseen instance of this support
        # size would still be found within the iteration budget
        w = unexplained / n
        p_more = 1.0 - (1.0 - w ** 3) ** config.max_iterations
        if p_more < config.stop_probability:
            break

    order = sorted(range(len(hypotheses)),
                   key=lambda i: (-hypotheses[i].quality, i))
    return [hypotheses[i] for i in order]
