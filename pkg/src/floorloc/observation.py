"""Ray observations and the L1 observation likelihood over the pose grid."""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numba
import numpy as np

from .database import PoseRayDatabase
from .depth import FloorplanDepth
from .errors import EmptyVolume, FovExceedsCamera, LayoutMismatch
from .geometry import TWO_PI, Pose
from .scan import RayScan, fov_layout, interp_circular, interp_table

DEFAULT_ORIENTATIONS = 36
DEFAULT_MAX_RANGE = 15.0


def interpolate_equiangular(fd: FloorplanDepth, n_rays: int, fov: float,
                            max_range: float = DEFAULT_MAX_RANGE) -> RayScan:
    """Resample per-column floorplan depth into equiangular rays.

    Image column ``u`` looks along ``alpha_u = atan((u + 0.5 - cx) / fx)``
    (positive to the right), i.e. scan angle ``-alpha_u``. Ranges are
    ``depth / cos(alpha_u)``; rays beyond ``max_range`` are invalid.
    """
    k = fd.intrinsics
    if k is None:
        raise ValueError("floorplan depth carries no intrinsics")
    if fov > k.horizontal_fov + 1e-12:
        raise FovExceedsCamera(f"fov {fov:.4f} exceeds camera coverage {k.horizontal_fov:.4f}")
    start, step = fov_layout(fov, n_rays)
    u = np.arange(fd.depth.size)
    col_alpha = np.arctan((u + 0.5 - k.cx) / k.fx)
    with np.errstate(invalid="ignore"):
        col_r = fd.depth / np.cos(col_alpha)
    col_ok = fd.valid & np.isfinite(col_r)

    alpha = -(start + step * np.arange(n_rays))
    # queries between the image edge and the outermost column centre use that column
    j = np.searchsorted(col_alpha, alpha, side="right") - 1
    j0 = np.clip(j, 0, col_alpha.size - 1)
    j1 = np.clip(j + 1, 0, col_alpha.size - 1)
    span = col_alpha[j1] - col_alpha[j0]
    w = np.where(span > 0, (alpha - col_alpha[j0]) / np.where(span > 0, span, 1.0), 0.0)
    w = np.clip(w, 0.0, 1.0)
    r0, r1 = col_r[j0], col_r[j1]
    ranges = np.where(w == 0.0, r0, np.where(w == 1.0, r1, (1.0 - w) * r0 + w * r1))
    ok = np.where(w == 0.0, col_ok[j0], np.where(w == 1.0, col_ok[j1], col_ok[j0] & col_ok[j1]))
    ok &= np.isfinite(ranges) & (ranges >= 0) & (ranges <= max_range)
    return RayScan(start, step, np.where(ok, ranges, max_range), max_range, ok)


def observation_log_likelihood(r_hat: RayScan, r_pose: RayScan) -> float:
    """``-sum |r_hat - r_pose|`` over mutually valid rays, rescaled to the full ray count."""
    if not r_hat.same_layout(r_pose):
        raise LayoutMismatch("scans have different ray layouts")
    both = r_hat.valid & r_pose.valid
    n_valid = int(both.sum())
    if n_valid == 0:
        return -math.inf
    l1 = float(np.abs(r_hat.ranges[both] - r_pose.ranges[both]).sum())
    return -l1 * (len(r_hat) / n_valid)


@dataclass(eq=False)
class LikelihoodVolume:
    """Log-likelihood per pose, indexed ``log_lik[orientation, iy, ix]``.

    Occupied cells hold ``-inf``; orientation bin ``k`` is centred on
    ``k * 2*pi / O``.
    """

    log_lik: np.ndarray
    free_mask: np.ndarray
    resolution: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def orientations(self) -> int:
        return self.log_lik.shape[0]

    @property
    def height(self) -> int:
        return self.log_lik.shape[1]

    @property
    def width(self) -> int:
        return self.log_lik.shape[2]


def bin_angle(k: int, orientations: int) -> float:
    return k * TWO_PI / orientations


def index_to_pose(index, orientations, resolution, origin) -> Pose:
    k, iy, ix = index
    return Pose(
        origin[0] + (ix + 0.5) * resolution,
        origin[1] + (iy + 0.5) * resolution,
        bin_angle(k, orientations),
    )


def pose_to_index(pose: Pose, orientations, resolution, origin) -> tuple[int, int, int]:
    """Nearest ``(bin, iy, ix)`` for a world pose."""
    ix = math.floor((pose.x - origin[0]) / resolution)
    iy = math.floor((pose.y - origin[1]) / resolution)
    k = int(round(pose.phi / (TWO_PI / orientations))) % orientations
    return k, iy, ix


def argmax_pose(v: LikelihoodVolume):
    """Best pose and its log-likelihood; ties go to the lowest ``(bin, iy, ix)`` index."""
    flat = v.log_lik.reshape(-1)
    if flat.size == 0:
        raise EmptyVolume("volume is empty")
    i = int(np.argmax(flat))
    if not np.isfinite(flat[i]):
        raise EmptyVolume("volume has no finite entry")
    idx = np.unravel_index(i, v.log_lik.shape)
    return index_to_pose(idx, v.orientations, v.resolution, v.origin), float(flat[i])


# --- matching ---------------------------------------------------------------


class FeatureBank:
    """Database scans pre-sliced for one observation layout and orientation grid.

    ``features[k, j, i]`` is ray ``j`` of free cell ``i`` seen at bin ``k``;
    invalid rays are NaN. Cells are the innermost axis so matching streams
    through contiguous memory. Matching is memory-bound, so features are
    stored in single precision by default; sums accumulate in double.
    """

    def __init__(self, db: PoseRayDatabase, start_angle: float, step: float, n_rays: int,
                 orientations: int = DEFAULT_ORIENTATIONS, dtype=np.float32):
        self.key = _layout_key(start_angle, step, n_rays, orientations)
        self.n_rays = n_rays
        self.orientations = orientations
        feats = np.empty((orientations, n_rays, db.n_free), dtype=dtype)
        for k in range(orientations):
            angles = bin_angle(k, orientations) + start_angle + step * np.arange(n_rays)
            i0, i1, w = interp_table(db.ray_count, angles)
            r, ok = interp_circular(db.ranges, db.valid, i0, i1, w)
            feats[k] = np.where(ok, r, np.nan).T
        feats.setflags(write=False)
        self.features = feats


def _layout_key(start, step, n, orientations):
    return (round(start, 12), round(step, 12), int(n), int(orientations))


_BANKS: "weakref.WeakKeyDictionary[PoseRayDatabase, dict]" = weakref.WeakKeyDictionary()


def feature_bank(db: PoseRayDatabase, scan: RayScan, orientations: int = DEFAULT_ORIENTATIONS) -> FeatureBank:
    """Cached :class:`FeatureBank` for ``scan``'s layout."""
    banks = _BANKS.setdefault(db, {})
    key = _layout_key(scan.start_angle, scan.angular_step, len(scan), orientations)
    bank = banks.get(key)
    if bank is None:
        if len(banks) >= 4:
            banks.pop(next(iter(banks)))
        bank = banks[key] = FeatureBank(db, scan.start_angle, scan.angular_step, len(scan), orientations)
    return bank


@numba.njit(cache=True, parallel=True)
def _match(features, query, qvalid, out):
    n_bins, n_rays, n_cells = features.shape
    for k in numba.prange(n_bins):
        s = np.zeros(n_cells)
        c = np.zeros(n_cells)
        for j in range(n_rays):
            if not qvalid[j]:
                continue
            q = query[j]
            row = features[k, j]
            for i in range(n_cells):
                f = np.float64(row[i])
                ok = f == f
                s[i] += abs(f - q) if ok else 0.0
                c[i] += 1.0 if ok else 0.0
        for i in range(n_cells):
            out[k, i] = -s[i] * n_rays / c[i] if c[i] > 0.0 else -np.inf


def match_bank(bank: FeatureBank, r_hat: RayScan) -> np.ndarray:
    """Log-likelihood of every (bin, free cell) pair, shape ``(O, n_free)``."""
    out = np.empty((bank.orientations, bank.features.shape[2]))
    _match(bank.features, np.ascontiguousarray(r_hat.ranges), r_hat.valid, out)
    return out


def likelihood_volume(r_hat: RayScan, db: PoseRayDatabase, orientations: int = DEFAULT_ORIENTATIONS,
                      bank: FeatureBank = None) -> LikelihoodVolume:
    """Score ``r_hat`` against every free cell and orientation bin of ``db``."""
    if db.n_free == 0:
        raise EmptyVolume("database has no free cells")
    if bank is None:
        bank = feature_bank(db, r_hat, orientations)
    elif bank.key != _layout_key(r_hat.start_angle, r_hat.angular_step, len(r_hat), orientations):
        raise LayoutMismatch("feature bank was built for a different layout")
    scores = match_bank(bank, r_hat)
    vol = np.full((orientations, db.height * db.width), -np.inf)
    vol[:, db.cell_ids] = scores
    return LikelihoodVolume(vol.reshape(orientations, db.height, db.width), db.free_mask,
                            db.resolution, db.origin)
