"""SE(2) histogram filter with a grouped-convolution motion update.

The belief is a probability volume ``p[orientation, iy, ix]``. Prediction
convolves every orientation slice with its own translational filter (one
group per orientation), then convolves the stacked volume circularly along
the orientation axis with a single rotational filter.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from .errors import FormatError, NoFreeCells, ShapeMismatch, ZeroPosterior
from .geometry import TWO_PI, EgoMotion, Pose, wrap_pi
from .observation import LikelihoodVolume, index_to_pose

DEFAULT_MAX_HALF_WIDTH = 25
# rotational filter taps below this fraction of the peak are skipped in predict
_ROT_CUTOFF = 1e-12


@dataclass(frozen=True)
class MotionNoise:
    sigma_x: float
    sigma_y: float
    sigma_phi: float

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0 and self.sigma_phi > 0):
            raise ValueError("motion noise standard deviations must be positive")


@dataclass(eq=False)
class ProbabilityVolume:
    p: np.ndarray
    free_mask: np.ndarray
    resolution: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def orientations(self) -> int:
        return self.p.shape[0]

    @property
    def height(self) -> int:
        return self.p.shape[1]

    @property
    def width(self) -> int:
        return self.p.shape[2]

    def copy(self) -> "ProbabilityVolume":
        return ProbabilityVolume(self.p.copy(), self.free_mask, self.resolution, self.origin)


@dataclass(frozen=True)
class TransitionKernel:
    """Per-orientation translational filters and one circular rotational filter.

    ``translational[k, h + dy, h + dx]`` is the weight for moving mass at bin
    ``k`` by ``(dx, dy)`` cells; ``rotational[m]`` for moving it ``m`` bins.
    When the noise is isotropic the filters factor as
    ``outer(factors_y[k], factors_x[k])``.
    """

    translational: np.ndarray
    rotational: np.ndarray
    motion: EgoMotion
    noise: MotionNoise
    factors_x: Optional[np.ndarray] = None
    factors_y: Optional[np.ndarray] = None

    @property
    def half_width(self) -> int:
        return self.translational.shape[1] // 2

    @property
    def orientations(self) -> int:
        return self.rotational.size


def _normalized_exp(logw: np.ndarray, axis) -> np.ndarray:
    w = np.exp(logw - logw.max(axis=axis, keepdims=True))
    return w / w.sum(axis=axis, keepdims=True)


def build_transition_kernel(t: EgoMotion, noise: MotionNoise, resolution: float, orientations: int,
                            max_half_width: int = DEFAULT_MAX_HALF_WIDTH) -> TransitionKernel:
    """Discretise the Gaussian motion model around ego-motion ``t``.

    For bin centre ``phi`` the filter weight at cell offset ``s`` is
    ``exp(-0.5 * d^T diag(sx^2, sy^2)^-1 d)`` with ``d = R(phi)^-1 s - t``;
    the rotational weight at bin offset ``m`` is
    ``exp(-0.5 * wrap(m * 2pi/O - t_phi)^2 / s_phi^2)``.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    reach = math.hypot(t.tx, t.ty) + 3.0 * max(noise.sigma_x, noise.sigma_y)
    h = min(int(math.ceil(reach / resolution - 1e-9)), int(max_half_width))
    h = max(h, 0)
    off = np.arange(-h, h + 1) * resolution
    phis = np.arange(orientations) * (TWO_PI / orientations)
    c, s = np.cos(phis)[:, None, None], np.sin(phis)[:, None, None]
    sx, sy = off[None, None, :], off[None, :, None]
    # body-frame displacement R(phi)^T [sx, sy] minus the commanded motion
    dx = c * sx + s * sy - t.tx
    dy = -s * sx + c * sy - t.ty
    logw = -0.5 * (dx**2 / noise.sigma_x**2 + dy**2 / noise.sigma_y**2)
    trans = _normalized_exp(logw.reshape(orientations, -1), axis=1).reshape(logw.shape)

    fx = fy = None
    if noise.sigma_x == noise.sigma_y:
        # isotropic noise: |R^T s - t| = |s - R t|, so the filter is separable
        mx = np.cos(phis) * t.tx - np.sin(phis) * t.ty
        my = np.sin(phis) * t.tx + np.cos(phis) * t.ty
        fx = _normalized_exp(-0.5 * (off[None, :] - mx[:, None]) ** 2 / noise.sigma_x**2, axis=1)
        fy = _normalized_exp(-0.5 * (off[None, :] - my[:, None]) ** 2 / noise.sigma_y**2, axis=1)

    dphi = np.array([wrap_pi(m * TWO_PI / orientations - t.tphi) for m in range(orientations)])
    rot = _normalized_exp(-0.5 * dphi**2 / noise.sigma_phi**2, axis=0)
    for a in (trans, rot, fx, fy):
        if a is not None:
            a.setflags(write=False)
    return TransitionKernel(trans, rot, t, noise, fx, fy)


def init_uniform(free_mask: np.ndarray, orientations: int, resolution: float = 1.0,
                 origin=(0.0, 0.0)) -> ProbabilityVolume:
    free_mask = np.asarray(free_mask, dtype=bool)
    n = int(free_mask.sum())
    if n == 0:
        raise NoFreeCells("map has no free cells")
    p = np.broadcast_to(free_mask / (n * orientations), (orientations,) + free_mask.shape).copy()
    return ProbabilityVolume(p, free_mask, float(resolution), tuple(origin))


# --- grouped convolution ------------------------------------------------------


@numba.njit(cache=True, parallel=True)
def _conv_separable(p, fx, fy, out):
    n_bins, h, w = p.shape
    r = fx.shape[1] // 2
    for k in numba.prange(n_bins):
        tmp = np.zeros((h, w))
        # along x: mass at x lands on x + d with weight fx[d]
        for y in range(h):
            for d in range(-r, r + 1):
                g = fx[k, d + r]
                for x in range(max(0, d), min(w, w + d)):
                    tmp[y, x] += g * p[k, y, x - d]
        out[k] = 0.0
        for d in range(-r, r + 1):
            g = fy[k, d + r]
            for y in range(max(0, d), min(h, h + d)):
                for x in range(w):
                    out[k, y, x] += g * tmp[y - d, x]


@numba.njit(cache=True, parallel=True)
def _conv_full(p, filters, out):
    n_bins, h, w = p.shape
    r = filters.shape[1] // 2
    for k in numba.prange(n_bins):
        out[k] = 0.0
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                g = filters[k, dy + r, dx + r]
                for y in range(max(0, dy), min(h, h + dy)):
                    for x in range(max(0, dx), min(w, w + dx)):
                        out[k, y, x] += g * p[k, y - dy, x - dx]


@numba.njit(cache=True, parallel=True)
def _conv_orientation(src, taps, weights, free, out):
    n_bins, h, w = src.shape
    for k in numba.prange(n_bins):
        out[k] = 0.0
        for i in range(taps.size):
            kk = (k - taps[i]) % n_bins
            g = weights[i]
            for y in range(h):
                for x in range(w):
                    out[k, y, x] += g * src[kk, y, x]
        for y in range(h):
            for x in range(w):
                if not free[y, x]:
                    out[k, y, x] = 0.0


def predict(v: ProbabilityVolume, k: TransitionKernel) -> ProbabilityVolume:
    """Motion update: grouped 2D convolution, circular orientation convolution, wall mask.

    Mass leaving the map is dropped (zero padding) before renormalising.
    """
    if k.orientations != v.orientations:
        raise ShapeMismatch(f"kernel has {k.orientations} orientations, volume {v.orientations}")
    moved = np.empty_like(v.p)
    if k.factors_x is not None:
        _conv_separable(v.p, k.factors_x, k.factors_y, moved)
    else:
        _conv_full(v.p, k.translational, moved)
    rot = k.rotational
    taps = np.flatnonzero(rot >= _ROT_CUTOFF * rot.max())
    out = np.empty_like(moved)
    _conv_orientation(moved, taps.astype(np.int64), rot[taps], v.free_mask, out)
    total = out.sum()
    if not total > 0:
        raise ZeroPosterior("all probability mass left the map")
    out /= total
    return ProbabilityVolume(out, v.free_mask, v.resolution, v.origin)


def update(v: ProbabilityVolume, lik: LikelihoodVolume) -> ProbabilityVolume:
    """Bayes measurement update, ``p * exp(log_lik - max)`` renormalised."""
    if lik.log_lik.shape != v.p.shape:
        raise ShapeMismatch(f"likelihood {lik.log_lik.shape} vs volume {v.p.shape}")
    ll = lik.log_lik
    finite = np.isfinite(ll)
    if not finite.any():
        raise ZeroPosterior("likelihood is zero everywhere")
    with np.errstate(over="ignore", invalid="ignore"):
        post = v.p * np.exp(ll - ll[finite].max())
    post[~finite] = 0.0
    total = post.sum()
    if not total > 0:
        # products underflowed; redo in the log domain
        with np.errstate(divide="ignore"):
            logp = np.log(v.p) + np.where(finite, ll, -np.inf)
        best = logp.max()
        if not np.isfinite(best):
            raise ZeroPosterior("observation contradicts every pose with prior mass")
        post = np.exp(logp - best)
        total = post.sum()
    post /= total
    return ProbabilityVolume(post, v.free_mask, v.resolution, v.origin)


@dataclass
class Readout:
    pose: Pose
    probability: float
    index: tuple
    marginal: Optional[np.ndarray] = None


def posterior_readout(v: ProbabilityVolume, with_marginal: bool = True) -> Readout:
    """Most probable pose (ties -> lowest ``(bin, iy, ix)``), its mass and the xy marginal."""
    i = int(np.argmax(v.p.reshape(-1)))
    idx = tuple(int(a) for a in np.unravel_index(i, v.p.shape))
    pose = index_to_pose(idx, v.orientations, v.resolution, v.origin)
    marginal = v.p.sum(axis=0) if with_marginal else None
    return Readout(pose, float(v.p.reshape(-1)[i]), idx, marginal)


# --- raw dumps ----------------------------------------------------------------

MAGIC = b"FLPV"
VERSION = 1
# magic, version, orientations, width, height, resolution, origin x/y
_HEADER = struct.Struct("<4sHIIIfff")


def write_volume(v: ProbabilityVolume, path):
    header = _HEADER.pack(MAGIC, VERSION, v.orientations, v.width, v.height, v.resolution, *v.origin)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.packbits(v.free_mask.ravel(), bitorder="little").tobytes())
        fh.write(np.ascontiguousarray(v.p, dtype="<f4").tobytes())


def read_volume(path) -> ProbabilityVolume:
    from .database import _f32_to_float

    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, o, w, h, res, ox, oy = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise FormatError(f"{path}: not an FLPV v{VERSION} file")
    off = _HEADER.size
    nbytes = (w * h + 7) // 8
    free = np.unpackbits(np.frombuffer(raw, np.uint8, nbytes, off), count=w * h, bitorder="little")
    off += nbytes
    if len(raw) != off + 4 * o * w * h:
        raise FormatError(f"{path}: size mismatch")
    p = np.frombuffer(raw, "<f4", o * w * h, off).astype(np.float64).reshape(o, h, w)
    return ProbabilityVolume(p, free.astype(bool).reshape(h, w), _f32_to_float(res),
                             (_f32_to_float(ox), _f32_to_float(oy)))
