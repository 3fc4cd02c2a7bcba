"""Trajectory simulation, observation noise and end-to-end tracking."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .database import PoseRayDatabase
from .errors import StartOccupied, Stuck, ZeroPosterior
from .floorplan import OccupancyGrid, cast_ray, render_fov_scan
from .geometry import EgoMotion, Pose, pose_compose
from .hfilter import MotionNoise, build_transition_kernel, init_uniform, posterior_readout, predict, update
from .observation import DEFAULT_ORIENTATIONS, feature_bank, likelihood_volume
from .scan import RayScan

DEFAULT_FOV = math.radians(108.0)
DEFAULT_N_RAYS = 40
MAX_ATTEMPTS = 50


@dataclass(frozen=True)
class NoiseModel:
    """Observation and odometry corruption applied by the simulator."""

    range_sigma: float = 0.0
    dropout_prob: float = 0.0
    ego_sigma_xy: float = 0.0
    ego_sigma_phi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.range_sigma, self.ego_sigma_xy, self.ego_sigma_phi) < 0:
            raise ValueError("noise parameters must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")


def perturb_scan(s: RayScan, noise: NoiseModel, rng: Optional[np.random.Generator] = None) -> RayScan:
    """Gaussian range noise on valid rays, clamped to ``[0, max_range]``, plus random dropout."""
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    eps = rng.normal(0.0, 1.0, size=len(s)) * noise.range_sigma
    drop = rng.random(len(s)) < noise.dropout_prob
    ranges = np.where(s.valid, np.clip(s.ranges + eps, 0.0, s.max_range), s.ranges)
    return RayScan(s.start_angle, s.angular_step, ranges, s.max_range, s.valid & ~drop)


@dataclass
class TrajectoryStep:
    pose: Pose
    ego: EgoMotion
    scan: RayScan

    def to_dict(self) -> dict:
        return {"pose": list(self.pose.as_tuple()), "ego": list(self.ego.as_tuple()), "scan": self.scan.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryStep":
        return cls(Pose(*d["pose"]), EgoMotion(*d["ego"]), RayScan.from_dict(d["scan"]))


@dataclass
class Trajectory:
    steps: list
    seed: Optional[int] = None
    map_ref: Optional[str] = None
    true_motions: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    @property
    def poses(self):
        return [s.pose for s in self.steps]


def write_trajectory(traj: Trajectory, path):
    with open(path, "w") as fh:
        for step in traj.steps:
            fh.write(json.dumps(step.to_dict()) + "\n")


def read_trajectory(path) -> Trajectory:
    steps = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            steps.append(TrajectoryStep.from_dict(json.loads(line)))
    return Trajectory(steps, map_ref=str(path))


@dataclass(frozen=True)
class MotionProfile:
    kind: str = "forward"
    step_length: float = 0.2
    step_sigma: float = 0.02
    heading_jitter: float = math.radians(3.0)
    turn_prob: float = 0.3
    turn_min: float = math.radians(10.0)
    turn_max: float = math.radians(30.0)
    margin: float = 0.2

    def __post_init__(self):
        if self.kind not in ("forward", "general"):
            raise ValueError(f"unknown motion profile {self.kind!r}")


def _clear(grid: OccupancyGrid, pose: Pose, direction: float, length: float, margin: float) -> bool:
    reach = length + margin
    hit = cast_ray(grid, (pose.x, pose.y), direction, reach + grid.resolution)
    if hit is not None and hit < reach:
        return False
    ex, ey = pose.x + reach * math.cos(direction), pose.y + reach * math.sin(direction)
    return grid.is_free(ex, ey)


def _propose(grid, pose, profile: MotionProfile, rng) -> EgoMotion:
    if profile.kind == "general" and rng.random() < profile.turn_prob:
        turn = rng.uniform(profile.turn_min, profile.turn_max) * (1.0 if rng.random() < 0.5 else -1.0)
        return EgoMotion(0.0, 0.0, turn)
    for attempt in range(MAX_ATTEMPTS):
        if attempt == 0:
            beta = rng.normal(0.0, profile.heading_jitter)
        else:
            beta = rng.uniform(-math.pi, math.pi)
        length = max(0.05, profile.step_length + rng.normal(0.0, profile.step_sigma))
        if _clear(grid, pose, pose.phi + beta, length, profile.margin):
            return EgoMotion(length * math.cos(beta), length * math.sin(beta), beta)
    raise Stuck(f"no collision-free step from {pose} after {MAX_ATTEMPTS} attempts")


def simulate_trajectory(grid: OccupancyGrid, start: Pose, n_steps: int, profile="forward",
                        noise: NoiseModel = NoiseModel(), fov: float = DEFAULT_FOV,
                        n_rays: int = DEFAULT_N_RAYS, max_range: float = 15.0) -> Trajectory:
    """Walk through free space, rendering a noisy ray scan at every pose.

    Step 0 holds the start pose with a zero ego-motion. Recorded ego-motions
    are the true motions plus Gaussian odometry noise.
    """
    if isinstance(profile, str):
        profile = MotionProfile(kind=profile)
    if not grid.is_free(start.x, start.y):
        raise StartOccupied(f"start pose {start} is not in free space")
    rng = np.random.default_rng(noise.seed)

    def observe(p):
        return perturb_scan(render_fov_scan(grid, p, fov, n_rays, max_range), noise, rng)

    pose = start
    steps = [TrajectoryStep(pose, EgoMotion(), observe(pose))]
    truths = [EgoMotion()]
    for _ in range(n_steps):
        motion = _propose(grid, pose, profile, rng)
        pose = pose_compose(pose, motion)
        ego = EgoMotion(
            motion.tx + rng.normal(0.0, 1.0) * noise.ego_sigma_xy,
            motion.ty + rng.normal(0.0, 1.0) * noise.ego_sigma_xy,
            motion.tphi + rng.normal(0.0, 1.0) * noise.ego_sigma_phi,
        )
        steps.append(TrajectoryStep(pose, ego, observe(pose)))
        truths.append(motion)
    return Trajectory(steps, seed=noise.seed, true_motions=truths)


def random_free_pose(grid: OccupancyGrid, rng: np.random.Generator, clearance: int = 2) -> Pose:
    """Uniform free cell centre at least ``clearance`` cells away from occupancy."""
    occ = grid.cells
    ok = ~occ
    for dy in range(-clearance, clearance + 1):
        for dx in range(-clearance, clearance + 1):
            ok &= ~np.roll(np.roll(occ, dy, axis=0), dx, axis=1)
    iy, ix = np.nonzero(ok)
    if iy.size == 0:
        raise StartOccupied("map has no free cell with the requested clearance")
    i = int(rng.integers(iy.size))
    x, y = grid.cell_center(int(ix[i]), int(iy[i]))
    return Pose(x, y, rng.uniform(0.0, 2.0 * math.pi))


def run_tracking(traj: Trajectory, db: PoseRayDatabase, noise: MotionNoise,
                 orientations: int = DEFAULT_ORIENTATIONS, with_marginals: bool = False,
                 timings: Optional[dict] = None,
                 on_step: Optional[Callable[[int, object], None]] = None) -> list:
    """Filter a trajectory from a uniform prior; returns one :class:`Readout` per step.

    Step 0 applies only the measurement update. ``timings`` accumulates
    seconds per stage; ``on_step(i, volume)`` sees every posterior.
    """
    clock = time.perf_counter
    acc = timings if timings is not None else {}
    for key in ("transition", "matching", "update", "readout"):
        acc.setdefault(key, 0.0)
    out = []
    belief = init_uniform(db.free_mask, orientations, db.resolution, db.origin)
    bank = None
    for i, step in enumerate(traj.steps):
        try:
            if i > 0:
                t0 = clock()
                kernel = build_transition_kernel(step.ego, noise, db.resolution, orientations)
                belief = predict(belief, kernel)
                acc["transition"] += clock() - t0
            t0 = clock()
            if bank is None:
                bank = feature_bank(db, step.scan, orientations)
            lik = likelihood_volume(step.scan, db, orientations, bank=bank)
            acc["matching"] += clock() - t0
            t0 = clock()
            belief = update(belief, lik)
            acc["update"] += clock() - t0
        except ZeroPosterior as exc:
            raise ZeroPosterior(str(exc), step=i) from exc
        t0 = clock()
        out.append(posterior_readout(belief, with_marginal=with_marginals))
        acc["readout"] += clock() - t0
        if on_step is not None:
            on_step(i, belief)
    return out
