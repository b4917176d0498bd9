"""Parallel-beam SPECT reconstruction with posterior sampling for voxel uncertainty."""

from spect_bayes.phantoms import VoxelGrid, make_point_source, make_shepp_logan_3d, make_uniform
from spect_bayes.projector import (
    DetectorGeometry,
    ProjectionStack,
    Projector,
    Ray,
    angles_from_step,
    back_project,
    build_system_matrix,
    default_geometry,
    devectorize,
    forward_project,
    trace_ray,
    vectorize,
)

__all__ = [
    "DetectorGeometry",
    "ProjectionStack",
    "Projector",
    "Ray",
    "VoxelGrid",
    "angles_from_step",
    "back_project",
    "build_system_matrix",
    "default_geometry",
    "devectorize",
    "forward_project",
    "make_point_source",
    "make_shepp_logan_3d",
    "make_uniform",
    "trace_ray",
    "vectorize",
]

__version__ = "0.1.0"
