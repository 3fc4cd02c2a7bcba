"""Geometric floorplan-depth estimation from ray scans.

A column-wise plane sweep scores depth hypotheses by cross-view geometric
consistency, a fixed observability-weighted box filter smooths the cost,
and a soft-argmin reads out the expected depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateGeometry,
    EmptyPoseList,
    HypothesisMismatch,
    NoSourceViews,
    NoValidColumns,
)
from .geometry import TWO_PI, EgoMotion, Pose
from .gravity import Intrinsics
from .scan import RayScan


@dataclass(frozen=True)
class DepthHypotheses:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.size < 2:
            raise ValueError("need at least two depth hypotheses")
        if not v[0] > 0 or np.any(np.diff(v) <= 0):
            raise ValueError("hypotheses must be positive and strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def linear(cls, d_min: float = 0.1, d_max: float = 15.0, count: int = 64) -> "DepthHypotheses":
        return cls(np.linspace(d_min, d_max, count))

    def __len__(self):
        return self.values.size


@dataclass
class CostDistribution:
    """Per-column costs ``cost[column, hypothesis]`` with observability weights.

    Entries with zero observability carry NaN cost.
    """

    hypotheses: DepthHypotheses
    column_angles: np.ndarray
    cost: np.ndarray
    observability: np.ndarray

    @property
    def n_columns(self) -> int:
        return self.cost.shape[0]


@dataclass
class DepthDistribution:
    hypotheses: DepthHypotheses
    probs: np.ndarray
    valid: np.ndarray

    @property
    def expectation(self) -> np.ndarray:
        d = self.probs @ self.hypotheses.values
        return np.where(self.valid, d, np.nan)

    def mean_depth(self) -> float:
        d = self.expectation[self.valid]
        return float(d.mean()) if d.size else float("nan")


@dataclass
class FloorplanDepth:
    """Per-column depth along the optical axis."""

    depth: np.ndarray
    valid: np.ndarray = None
    intrinsics: Optional[Intrinsics] = None
    column_angles: Optional[np.ndarray] = None

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64).reshape(-1)
        if self.valid is None:
            self.valid = np.isfinite(self.depth) & (self.depth > 0)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(-1)


@dataclass
class ViewSet:
    """A reference scan plus source scans with poses relative to the reference."""

    reference: RayScan
    sources: list = field(default_factory=list)  # [(Pose, RayScan)]

    def to_dict(self) -> dict:
        return {
            "reference": self.reference.to_dict(),
            "sources": [{"pose": list(p.as_tuple()), "scan": s.to_dict()} for p, s in self.sources],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViewSet":
        return cls(
            RayScan.from_dict(d["reference"]),
            [(Pose(*v["pose"]), RayScan.from_dict(v["scan"])) for v in d.get("sources", [])],
        )


def sample_scan(scan: RayScan, bearings: np.ndarray):
    """Linearly interpolate a scan at bearings relative to its heading.

    Returns ``(ranges, ok)``; ``ok`` is false outside the scan's angular
    coverage or next to an invalid ray.
    """
    bearings = np.asarray(bearings, dtype=np.float64)
    n = scan.ranges.size
    f = np.mod(bearings - scan.start_angle, TWO_PI) / scan.angular_step
    near = np.rint(f)
    f = np.where(np.abs(f - near) < 1e-9, near, f)
    if scan.is_circular:
        base = np.floor(f)
        i0 = base.astype(np.int64) % n
        i1 = (i0 + 1) % n
        inside = np.ones(f.shape, dtype=bool)
    else:
        inside = f <= n - 1
        f = np.where(inside, f, 0.0)
        base = np.floor(f)
        i0 = base.astype(np.int64)
        i1 = np.minimum(i0 + 1, n - 1)
    w = f - base
    r0, r1 = scan.ranges[i0], scan.ranges[i1]
    vals = np.where(w == 0.0, r0, (1.0 - w) * r0 + w * r1)
    ok = inside & scan.valid[i0] & ((w == 0.0) | scan.valid[i1])
    return vals, ok


# ColumnFeatures hook: (view_index, bearings[N, D]) -> (features[N, D, C], ok[N, D]).
# View 0 is the reference; bearings are relative to that view's heading.
ColumnFeatures = Callable[[int, np.ndarray], tuple]


def _source_geometry(pose: Pose, points: np.ndarray):
    """Points (.., 2) in the reference frame -> (bearing, distance, forward) in a source frame."""
    c, s = math.cos(pose.phi), math.sin(pose.phi)
    dx = points[..., 0] - pose.x
    dy = points[..., 1] - pose.y
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return np.arctan2(ly, lx), np.hypot(lx, ly), lx > 0


def plane_sweep_cost(
    views: ViewSet,
    hyp: DepthHypotheses,
    column_angles: Sequence[float],
    features: Optional[ColumnFeatures] = None,
) -> CostDistribution:
    """Sweep depth hypotheses along reference columns and score cross-view consistency.

    Without ``features`` the per-view residual is the measured range at the
    projected bearing minus the distance to the hypothesised point (for the
    reference, ``range * cos(alpha) - d``) and the cost is the mean squared
    residual over observing views. With ``features`` the cost is the
    channel-averaged variance of the sampled features across observing views.
    Entries seen by fewer than two views are unobservable.
    """
    if not views.sources:
        raise NoSourceViews("plane sweep needs at least one source view")
    alpha = np.asarray(column_angles, dtype=np.float64).reshape(-1)
    d = hyp.values
    n_views = 1 + len(views.sources)
    # hypothesised wall points in the reference body frame, shape (N, D, 2)
    pts = np.stack(np.broadcast_arrays(d[None, :], d[None, :] * np.tan(alpha)[:, None]), axis=-1)
    bearings = [np.broadcast_to(alpha[:, None], (alpha.size, d.size))]
    ref_r, ref_ok = sample_scan(views.reference, alpha)
    ref_ok = ref_ok & (np.cos(alpha) > 0)
    oks = [np.broadcast_to(ref_ok[:, None], (alpha.size, d.size))]
    residuals = [np.broadcast_to((ref_r * np.cos(alpha))[:, None], (alpha.size, d.size)) - d[None, :]]
    for pose, scan in views.sources:
        beta, dist, fwd = _source_geometry(pose, pts)
        r, ok = sample_scan(scan, beta)
        bearings.append(beta)
        oks.append(ok & fwd)
        residuals.append(r - dist)
    ok = np.stack(oks)
    n_obs = ok.sum(axis=0)
    observable = n_obs >= 2
    with np.errstate(invalid="ignore", divide="ignore"):
        if features is None:
            res = np.where(ok, np.stack(residuals), 0.0)
            cost = (res**2).sum(axis=0) / n_obs
        else:
            cost = _feature_variance(features, bearings, ok, n_obs)
    cost = np.where(observable, cost, np.nan)
    obs = np.where(observable, n_obs / n_views, 0.0)
    if not observable.any():
        raise DegenerateGeometry("no hypothesis is observed by two or more views")
    return CostDistribution(hyp, alpha, cost, obs)


def _feature_variance(features: ColumnFeatures, bearings, ok, n_obs):
    feats = []
    for v, beta in enumerate(bearings):
        f, f_ok = features(v, np.asarray(beta))
        ok[v] &= np.asarray(f_ok, dtype=bool)
        feats.append(np.asarray(f, dtype=np.float64))
    n_obs[...] = ok.sum(axis=0)
    f = np.where(ok[..., None], np.stack(feats), 0.0)
    mean = f.sum(axis=0) / n_obs[..., None]
    var = (np.where(ok[..., None], f - mean, 0.0) ** 2).sum(axis=0) / n_obs[..., None]
    return var.mean(axis=-1)


def smooth_cost(c: CostDistribution, kernel_radius=(1, 1)) -> CostDistribution:
    """Observability-weighted box filter over (column, hypothesis) with edge replication.

    ``kernel_radius`` is ``(hypotheses, columns)``.
    """
    rh, rc = (int(r) for r in kernel_radius)
    if rh < 0 or rc < 0:
        raise ValueError("kernel radius must be non-negative")
    if rh == 0 and rc == 0:
        return CostDistribution(c.hypotheses, c.column_angles, c.cost.copy(), c.observability.copy())
    w = c.observability
    wc = np.where(w > 0, w * np.nan_to_num(c.cost, nan=0.0), 0.0)
    win = (2 * rc + 1, 2 * rh + 1)
    pad = ((rc, rc), (rh, rh))
    sw = np.lib.stride_tricks.sliding_window_view(np.pad(w, pad, mode="edge"), win).sum(axis=(-1, -2))
    swc = np.lib.stride_tricks.sliding_window_view(np.pad(wc, pad, mode="edge"), win).sum(axis=(-1, -2))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(w > 0, swc / sw, np.nan)
    return CostDistribution(c.hypotheses, c.column_angles, out, w.copy())


def soft_argmin(c: CostDistribution, intrinsics: Optional[Intrinsics] = None):
    """``softmax(-cost)`` over observable hypotheses and its expected depth.

    Columns without any observable hypothesis come back invalid with a
    uniform distribution.
    """
    obs = c.observability > 0
    valid = obs.any(axis=1)
    z = np.where(obs, -np.nan_to_num(c.cost, nan=0.0), -np.inf)
    zmax = np.where(valid, z.max(axis=1), 0.0)
    e = np.where(obs, np.exp(z - zmax[:, None]), 0.0)
    total = e.sum(axis=1)
    n_hyp = c.cost.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(valid[:, None], e / total[:, None], 1.0 / n_hyp)
    dist = DepthDistribution(c.hypotheses, probs, valid)
    depth = FloorplanDepth(dist.expectation, valid.copy(), intrinsics, c.column_angles)
    return dist, depth


def fuse_distributions(p_mono: DepthDistribution, p_mv: DepthDistribution, w: float) -> DepthDistribution:
    """``w * p_mono + (1 - w) * p_mv`` per column, falling back to whichever input is valid."""
    if not 0.0 <= w <= 1.0:
        raise ValueError("fusion weight must lie in [0, 1]")
    if not np.array_equal(p_mono.hypotheses.values, p_mv.hypotheses.values) or p_mono.probs.shape != p_mv.probs.shape:
        raise HypothesisMismatch("distributions use different hypothesis grids")
    a, b = p_mono.valid, p_mv.valid
    wcol = np.where(a & b, w, np.where(a, 1.0, 0.0))[:, None]
    probs = wcol * p_mono.probs + (1.0 - wcol) * p_mv.probs
    valid = a | b
    probs = np.where(valid[:, None], probs, 1.0 / probs.shape[1])
    return DepthDistribution(p_mono.hypotheses, probs, valid)


@dataclass(frozen=True)
class SelectionThresholds:
    min_baseline_m: float = 0.05
    max_rotation_rad: float = math.radians(30.0)

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionThresholds":
        return cls(float(d.get("min_baseline_m", 0.05)), math.radians(float(d.get("max_rotation_deg", 30.0))))

    def to_dict(self) -> dict:
        return {"min_baseline_m": self.min_baseline_m, "max_rotation_deg": math.degrees(self.max_rotation_rad)}


# (relative_poses, mean_mono, mean_mv, thresholds) -> w in [0, 1]
WeightFunction = Callable[[Sequence[EgoMotion], float, float, SelectionThresholds], float]


def threshold_selection_weight(
    relative_poses: Sequence[EgoMotion],
    mean_mono: float,
    mean_mv: float,
    cfg: SelectionThresholds = SelectionThresholds(),
    weight_fn: Optional[WeightFunction] = None,
) -> float:
    """Monocular weight: 1 for degenerate multiview geometry, else 0.

    Geometry is degenerate when the largest baseline is below
    ``cfg.min_baseline_m`` or the largest rotation exceeds
    ``cfg.max_rotation_rad``. ``weight_fn`` replaces the rule.
    """
    if not relative_poses:
        raise EmptyPoseList("need at least one relative pose")
    if weight_fn is not None:
        return float(np.clip(weight_fn(relative_poses, mean_mono, mean_mv, cfg), 0.0, 1.0))
    baseline = max(t.translation for t in relative_poses)
    rotation = max(abs(t.tphi) for t in relative_poses)
    if baseline < cfg.min_baseline_m or rotation > cfg.max_rotation_rad:
        return 1.0
    return 0.0


def depth_loss(d: FloorplanDepth, d_star: FloorplanDepth, lam: float = 1.0, eps: float = 1e-8,
               cosine_sign: float = 1.0) -> float:
    """Mean L1 plus ``cosine_sign * lam`` times the cosine similarity of the depth vectors.

    Only mutually valid columns count. ``cosine_sign=-1`` turns the shape
    term into a penalty for misalignment.
    """
    if d.depth.shape != d_star.depth.shape:
        raise ValueError("depth vectors differ in length")
    if not eps > 0:
        raise ValueError("eps must be positive")
    both = d.valid & d_star.valid
    if not both.any():
        raise NoValidColumns("no mutually valid columns")
    a, b = d.depth[both], d_star.depth[both]
    l1 = float(np.abs(a - b).mean())
    cos = float(a @ b) / max(float(np.linalg.norm(a) * np.linalg.norm(b)), eps)
    return l1 + cosine_sign * lam * cos
