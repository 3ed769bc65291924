"""poseforge: multi-instance 6D object pose fitting and BOP-style evaluation."""

__version__ = "0.1.0"

from .camera import CameraIntrinsics, backproject, depth_to_distance, project
from .exceptions import (
    DegenerateMesh,
    DimensionMismatch,
    MissingField,
    NearPlanarConfiguration,
    NoHypothesis,
    NonPositiveDepth,
    ParseError,
    PoseForgeError,
    TooFewPoints,
    UnsupportedElement,
    ValidationError,
)
from .geometry import RigidPose, transform_point
from .mesh import TriangleMesh, mesh_diameter

__all__ = [
    "CameraIntrinsics",
    "RigidPose",
    "TriangleMesh",
    "backproject",
    "depth_to_distance",
    "mesh_diameter",
    "project",
    "transform_point",
    "PoseForgeError",
    "ValidationError",
    "NonPositiveDepth",
    "DegenerateMesh",
    "DimensionMismatch",
    "ParseError",
    "UnsupportedElement",
    "MissingField",
    "TooFewPoints",
    "NearPlanarConfiguration",
    "NoHypothesis",
]
