"""Estimate-to-ground-truth matching, recall, and Average Recall.

Recall is the fraction of annotated object instances (visible above a
cutoff) for which a correct pose was estimated. An estimate is matched
greedily: estimates are visited in decreasing confidence order and each
claims the unmatched ground-truth instance with the smallest error; the
claim counts as correct iff its error is under the threshold. Average
Recall aggregates recall over a grid of error thresholds (and misalignment
tolerances for VSD), dataset-level: total correct over total eligible.
"""

import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..exceptions import ValidationError
from ..rendering import DELTA_MM, render_distance_map
from .pose_errors import e_mspd, e_mssd, vsd_pair_stats
from .symmetry import SymmetrySet

VISIBILITY_CUTOFF = 0.1
# threshold grids: fractions of the object diameter (VSD tau, MSSD theta),
# fractions of the mask union (VSD theta), pixel multiples of r = w/640 (MSPD)
DIAMETER_FRACTIONS = np.arange(1, 11) * 0.05
VSD_THETAS = np.arange(1, 11) * 0.05
MSPD_UNITS = np.arange(1, 11) * 5.0
SISO_TAU_MM = 20.0
SISO_THETA = 0.3


@dataclass(frozen=True)
class GroundTruthInstance:
    """One annotated object instance in one image."""
    object_id: int
    pose: object
    visible_fraction: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.visible_fraction <= 1.0:
            raise ValidationError("visible_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class PoseEstimate:
    """One pose estimate with its confidence score."""
    object_id: int
    pose: object
    score: float = 1.0


@dataclass
class ImageEval:
    """Everything needed to evaluate one image: camera, measured scene
    distance map (None if depth is unavailable; VSD then treats every
    rendered pixel as visible), ground truth, and estimates."""
    cam: object
    dist_img: Optional[object] = None
    gts: list = field(default_factory=list)
    estimates: list = field(default_factory=list)


def _greedy_claims(err, order):
    """Visit estimate rows in `order`; each claims the unmatched column with
    the smallest error (lowest index on ties). Returns claimed errors."""
    n_est, n_gt = err.shape
    taken = np.zeros(n_gt, dtype=bool)
    claims = []
    for i in order:
        if taken.all():
            break
        row = np.where(taken, np.inf, err[i])
        j = int(np.argmin(row))
        taken[j] = True
        claims.append(row[j])
    return np.asarray(claims, dtype=np.float64)


def _confidence_order(estimates):
    scores = np.asarray([e.score for e in estimates], dtype=np.float64)
    return np.argsort(-scores, kind="stable")


def match_instances(estimates, gts, error_fn,
                    visibility_cutoff=VISIBILITY_CUTOFF):
    """Greedy confidence-ordered matching, grouped by object id.

    :param error_fn: callable (estimate, ground_truth) -> error.
    :returns: (claim_errors, n_eligible); one error per estimate that
        claimed an eligible ground-truth instance.
    """
    eligible = [g for g in gts if g.visible_fraction >= visibility_cutoff]
    object_ids = sorted({g.object_id for g in eligible}
                        | {e.object_id for e in estimates})
    all_claims = []
    for oid in object_ids:
        est_o = [e for e in estimates if e.object_id == oid]
        gt_o = [g for g in eligible if g.object_id == oid]
        if not est_o or not gt_o:
            continue
        err = np.array([[error_fn(e, g) for g in gt_o] for e in est_o],
                       dtype=np.float64)
        all_claims.append(_greedy_claims(err, _confidence_order(est_o)))
    claims = (np.concatenate(all_claims) if all_claims
              else np.zeros(0, dtype=np.float64))
    return claims, len(eligible)


def match_and_recall(estimates, gts, error_fn, threshold,
                     visibility_cutoff=VISIBILITY_CUTOFF):
    """Recall at one threshold: correct claims / eligible instances.

    Vacuously 1.0 when nothing is eligible.
    """
    claims, n_eligible = match_instances(estimates, gts, error_fn,
                                         visibility_cutoff)
    if n_eligible == 0:
        return 1.0
    return float(np.count_nonzero(claims < threshold)) / n_eligible


def _full_visible_stats(dist_est, dist_gt):
    # no measured scene surface: every rendered pixel counts as visible
    v_est = np.asarray(dist_est) > 0
    v_gt = np.asarray(dist_gt) > 0
    inter = v_est & v_gt
    diffs = np.abs(np.asarray(dist_est)[inter] - np.asarray(dist_gt)[inter])
    return int(np.count_nonzero(v_est | v_gt)), diffs


def _eval_item(item, meshes, symmetries, delta, visibility_cutoff):
    """Per-image correct/eligible counts on every threshold setting.

    Returns (vsd_correct (10, 10), mssd_correct (10,), mspd_correct (10,),
    n_eligible). Dataset totals are the sums over images.
    """
    n_frac = len(DIAMETER_FRACTIONS)
    vsd_correct = np.zeros((n_frac, len(VSD_THETAS)), dtype=np.int64)
    mssd_correct = np.zeros(n_frac, dtype=np.int64)
    mspd_correct = np.zeros(len(MSPD_UNITS), dtype=np.int64)
    n_eligible = 0

    r_px = item.cam.width / 640.0
    d_img = (None if item.dist_img is None
             else np.asarray(item.dist_img, dtype=np.float64))

    eligible = [g for g in item.gts
                if g.visible_fraction >= visibility_cutoff]
    object_ids = sorted({g.object_id for g in eligible})
    for oid in object_ids:
        gt_o = [g for g in eligible if g.object_id == oid]
        est_o = [e for e in item.estimates if e.object_id == oid]
        n_eligible += len(gt_o)
        if not est_o:
            continue
        mesh = meshes[oid]
        syms = (symmetries or {}).get(oid) or SymmetrySet.identity_only()
        diameter = mesh.diameter
        order = _confidence_order(est_o)
        verts = mesh.vertices

        mssd = np.array([[e_mssd(e.pose, g.pose, syms, verts) for g in gt_o]
                         for e in est_o])
        mspd = np.array([[e_mspd(e.pose, g.pose, syms, verts, item.cam)
                          for g in gt_o] for e in est_o])
        claims = _greedy_claims(mssd, order)
        for k, frac in enumerate(DIAMETER_FRACTIONS):
            mssd_correct[k] += int(np.count_nonzero(claims < frac * diameter))
        claims = _greedy_claims(mspd, order)
        for k, unit in enumerate(MSPD_UNITS):
            mspd_correct[k] += int(np.count_nonzero(claims < unit * r_px))

        # VSD: render each pose once, reduce each pair once, then sweep the
        # (tau, theta) grid over the cached distance gaps
        renders_gt = [render_distance_map(mesh, g.pose, item.cam)
                      for g in gt_o]
        renders_est = [render_distance_map(mesh, e.pose, item.cam)
                       for e in est_o]
        stats = [[(vsd_pair_stats(de, dg, d_img, delta)
                   if d_img is not None else _full_visible_stats(de, dg))
                  for dg in renders_gt] for de in renders_est]
        for k, frac in enumerate(DIAMETER_FRACTIONS):
            tau = frac * diameter
            err = np.array([
                [1.0 - (np.count_nonzero(diffs < tau) / n_union
                        if n_union else 0.0)
                 for (n_union, diffs) in row] for row in stats])
            claims = _greedy_claims(err, order)
            for m, theta in enumerate(VSD_THETAS):
                vsd_correct[k, m] += int(np.count_nonzero(claims < theta))
    return vsd_correct, mssd_correct, mspd_correct, n_eligible


def _eval_item_siso(item, meshes, delta, visibility_cutoff, tau, theta):
    """Single-instance protocol: per object presence, the top-confidence
    estimate is scored against its best eligible instance."""
    correct = 0
    total = 0
    d_img = (None if item.dist_img is None
             else np.asarray(item.dist_img, dtype=np.float64))
    eligible = [g for g in item.gts
                if g.visible_fraction >= visibility_cutoff]
    for oid in sorted({g.object_id for g in eligible}):
        gt_o = [g for g in eligible if g.object_id == oid]
        total += 1
        est_o = [e for e in item.estimates if e.object_id == oid]
        if not est_o:
            continue
        top = est_o[int(_confidence_order(est_o)[0])]
        mesh = meshes[oid]
        d_est = render_distance_map(mesh, top.pose, item.cam)
        best = np.inf
        for g in gt_o:
            d_gt = render_distance_map(mesh, g.pose, item.cam)
            n_union, diffs = (vsd_pair_stats(d_est, d_gt, d_img, delta)
                              if d_img is not None
                              else _full_visible_stats(d_est, d_gt))
            e = 1.0 - (np.count_nonzero(diffs < tau) / n_union
                       if n_union else 0.0)
            best = min(best, e)
        if best < theta:
            correct += 1
    return correct, total


def evaluate_bop(items, meshes, symmetries=None, mode="core", delta=DELTA_MM,
                 visibility_cutoff=VISIBILITY_CUTOFF, jobs=1):
    """Score a dataset of images.

    :param items: iterable of ImageEval.
    :param meshes: {object_id: TriangleMesh} evaluation models.
    :param symmetries: {object_id: SymmetrySet}, identity-only by default.
    :param mode: "core" for the threshold-grid Average Recall triplet
        (AR_VSD over 10 tau x 10 theta settings, AR_MSSD and AR_MSPD over
        10 thresholds each, AR_D their mean); "siso" for the legacy
        single-setting protocol (VSD, tau=20 mm, theta=0.3, one estimate
        per object presence).
    :param jobs: worker processes; images are independent.
    :returns: dict of scores; "core" also carries the per-setting recall
        grids under "vsd_recalls", "mssd_recalls", "mspd_recalls".
    :raises ValidationError: unknown mode, or no eligible ground truth.
    """
    items = list(items)
    if mode == "core":
        worker = functools.partial(_eval_item, meshes=meshes,
                                   symmetries=symmetries, delta=delta,
                                   visibility_cutoff=visibility_cutoff)
    elif mode == "siso":
        worker = functools.partial(_eval_item_siso, meshes=meshes,
                                   delta=delta,
                                   visibility_cutoff=visibility_cutoff,
                                   tau=SISO_TAU_MM, theta=SISO_THETA)
    else:
        raise ValidationError("mode must be 'core' or 'siso': %r" % (mode,))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, items))
    else:
        results = [worker(item) for item in items]

    if mode == "siso":
        correct = sum(r[0] for r in results)
        total = sum(r[1] for r in results)
        if total == 0:
            raise ValidationError("no eligible ground truth to score")
        return {"mode": "siso", "recall": correct / total,
                "correct": correct, "total": total}

    vsd = sum(r[0] for r in results)
    mssd = sum(r[1] for r in results)
    mspd = sum(r[2] for r in results)
    n_eligible = sum(r[3] for r in results)
    if n_eligible == 0:
        raise ValidationError("no eligible ground truth to score")
    vsd_recalls = vsd / n_eligible
    mssd_recalls = mssd / n_eligible
    mspd_recalls = mspd / n_eligible
    ar_vsd = float(vsd_recalls.mean())
    ar_mssd = float(mssd_recalls.mean())
    ar_mspd = float(mspd_recalls.mean())
    return {
        "mode": "core",
        "ar_vsd": ar_vsd,
        "ar_mssd": ar_mssd,
        "ar_mspd": ar_mspd,
        "ar_d": (ar_vsd + ar_mssd + ar_mspd) / 3.0,
        "n_eligible": int(n_eligible),
        "vsd_recalls": vsd_recalls.tolist(),
        "mssd_recalls": mssd_recalls.tolist(),
        "mspd_recalls": mspd_recalls.tolist(),
    }


def ar_core(per_dataset_ar_d):
    """Mean of per-dataset AR_D scores (each dataset a sub-challenge)."""
    vals = list(per_dataset_ar_d)
    if not vals:
        raise ValidationError("ar_core needs at least one dataset score")
    return float(np.mean(vals))
