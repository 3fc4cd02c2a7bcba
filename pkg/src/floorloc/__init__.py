"""Floorplan localization from equiangular ray scans with an SE(2) histogram filter."""

import os

# numba probes an outdated TBB first and warns; OpenMP is always present here
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from .database import PoseRayDatabase, build_ray_database, read_database, write_database  # noqa: E402
from .floorplan import OccupancyGrid, cast_ray, load_floorplan, render_circular_scan, render_fov_scan  # noqa: E402
from .geometry import EgoMotion, Pose, pose_compose  # noqa: E402
from .hfilter import (  # noqa: E402
    MotionNoise,
    ProbabilityVolume,
    TransitionKernel,
    build_transition_kernel,
    init_uniform,
    posterior_readout,
    predict,
    update,
)
from .observation import LikelihoodVolume, argmax_pose, likelihood_volume, observation_log_likelihood  # noqa: E402
from .scan import RayScan, slice_fov_scan  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "EgoMotion",
    "LikelihoodVolume",
    "MotionNoise",
    "OccupancyGrid",
    "Pose",
    "PoseRayDatabase",
    "ProbabilityVolume",
    "RayScan",
    "TransitionKernel",
    "argmax_pose",
    "build_ray_database",
    "build_transition_kernel",
    "cast_ray",
    "init_uniform",
    "likelihood_volume",
    "load_floorplan",
    "observation_log_likelihood",
    "pose_compose",
    "posterior_readout",
    "predict",
    "read_database",
    "render_circular_scan",
    "render_fov_scan",
    "slice_fov_scan",
    "update",
    "write_database",
]
