"""Pose-error functions and benchmark scoring.

Pointwise errors (TE, RE, ADD, ADI), surface deviations under symmetry
(MSSD, MSPD), the visible surface discrepancy (VSD), global-symmetry
discovery, estimate-to-ground-truth matching, and Average Recall.
"""

from .pose_errors import (
    e_add,
    e_adi,
    e_mspd,
    e_mssd,
    e_re,
    e_te,
    e_vsd,
    vsd_pair_stats,
)
from .symmetry import (
    SymmetrySet,
    discover_symmetries,
    icosphere_axes,
    load_symmetry_annotations,
    save_symmetry_annotations,
    symmetry_set_from_annotation,
)
from .scoring import (
    GroundTruthInstance,
    ar_core,
    ImageEval,
    PoseEstimate,
    evaluate_bop,
    match_and_recall,
    match_instances,
)

__all__ = [
    "GroundTruthInstance",
    "ImageEval",
    "PoseEstimate",
    "SymmetrySet",
    "ar_core",
    "discover_symmetries",
    "e_add",
    "e_adi",
    "e_mspd",
    "e_mssd",
    "e_re",
    "e_te",
    "e_vsd",
    "evaluate_bop",
    "icosphere_axes",
    "load_symmetry_annotations",
    "match_and_recall",
    "match_instances",
    "save_symmetry_annotations",
    "symmetry_set_from_annotation",
    "vsd_pair_stats",
]
