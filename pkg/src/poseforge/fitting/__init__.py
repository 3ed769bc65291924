"""Robust 6D pose fitting from many-to-many 2D-3D correspondences."""

from .correspond import (
    Correspondence,
    CorrespondenceSet,
    build_neighborhood_graph,
    quality_multi,
    quality_single,
    reprojection_error,
)
from .multi import jaccard_inliers, progressive_x
from .ransac import FitConfig, PoseHypothesis, gc_local_optimize, gc_ransac
from .sampling import ProsacSampler, is_degenerate_sample, prosac_sample
from .solvers import epnp_solve, lm_refine, p3p_solve

__all__ = [
    "Correspondence",
    "CorrespondenceSet",
    "FitConfig",
    "PoseHypothesis",
    "ProsacSampler",
    "build_neighborhood_graph",
    "epnp_solve",
    "gc_local_optimize",
    "gc_ransac",
    "is_degenerate_sample",
    "jaccard_inliers",
    "lm_refine",
    "p3p_solve",
    "progressive_x",
    "prosac_sample",
    "quality_multi",
    "quality_single",
    "reprojection_error",
]
