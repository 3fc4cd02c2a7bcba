"""Equiangular 1D range images and pose-conditioned slicing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadFov, FormatError, LayoutMismatch
from .geometry import TWO_PI

# fractional ray positions this close to an integer are treated as exact hits
_SNAP = 1e-9


@dataclass(eq=False)
class RayScan:
    """A 1D range image with rays at ``start_angle + k * angular_step``.

    Angles are counter-clockwise and relative to the pose heading. Invalid
    rays (no return, masked, dropped) carry ``range == max_range``.
    """

    start_angle: float
    angular_step: float
    ranges: np.ndarray
    max_range: float
    valid: np.ndarray = None

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=np.float64).reshape(-1)
        if self.valid is None:
            self.valid = self.ranges < self.max_range
        self.valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if self.ranges.size < 1:
            raise ValueError("a scan needs at least one ray")
        if self.valid.shape != self.ranges.shape:
            raise ValueError("ranges and valid differ in length")
        if not self.angular_step > 0:
            raise ValueError("angular_step must be positive")
        if (self.ranges.size - 1) * self.angular_step > TWO_PI + 1e-9:
            raise ValueError("scan covers more than a full circle")
        self.ranges = np.where(self.valid, self.ranges, self.max_range)
        r = self.ranges[self.valid]
        if r.size and (r.min() < 0 or r.max() > self.max_range):
            raise ValueError("valid ranges must lie in [0, max_range]")

    def __len__(self):
        return self.ranges.size

    @property
    def angles(self) -> np.ndarray:
        return self.start_angle + self.angular_step * np.arange(self.ranges.size)

    @property
    def coverage(self) -> float:
        return (self.ranges.size - 1) * self.angular_step

    @property
    def is_circular(self) -> bool:
        return abs(self.ranges.size * self.angular_step - TWO_PI) < 1e-9

    def same_layout(self, other: "RayScan", tol: float = 1e-9) -> bool:
        return (
            len(self) == len(other)
            and abs(self.start_angle - other.start_angle) <= tol
            and abs(self.angular_step - other.angular_step) <= tol
        )

    def to_dict(self) -> dict:
        return {
            "start_angle": float(self.start_angle),
            "step": float(self.angular_step),
            "max_range": float(self.max_range),
            "ranges": [float(r) for r in self.ranges],
            "valid": [bool(v) for v in self.valid],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RayScan":
        try:
            return cls(
                start_angle=float(d["start_angle"]),
                angular_step=float(d["step"]),
                ranges=np.asarray(d["ranges"], dtype=np.float64),
                max_range=float(d["max_range"]),
                valid=np.asarray(d["valid"], dtype=bool) if "valid" in d else None,
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad scan record: {exc}") from exc


def interp_table(ray_count: int, angles: np.ndarray):
    """Circular linear-interpolation indices for world ``angles``.

    Returns ``(i0, i1, w)`` such that the value at each angle is
    ``(1 - w) * r[i0] + w * r[i1]`` for a circular scan of ``ray_count``
    rays starting at angle 0.
    """
    step = TWO_PI / ray_count
    f = np.mod(np.asarray(angles, dtype=np.float64), TWO_PI) / step
    near = np.rint(f)
    f = np.where(np.abs(f - near) < _SNAP, near, f)
    base = np.floor(f)
    w = f - base
    i0 = base.astype(np.int64) % ray_count
    i1 = (i0 + 1) % ray_count
    return i0, i1, w


def interp_circular(ranges, valid, i0, i1, w):
    """Apply an :func:`interp_table` to ranges of shape ``(..., ray_count)``."""
    r0 = ranges[..., i0]
    r1 = ranges[..., i1]
    out = np.where(w == 0.0, r0, (1.0 - w) * r0 + w * r1)
    ok = valid[..., i0] & ((w == 0.0) | valid[..., i1])
    return out, ok


def slice_scan(db_scan: RayScan, heading: float, start_angle: float, step: float, n_rays: int) -> RayScan:
    """View a circular scan from ``heading`` with an arbitrary equiangular layout."""
    if not db_scan.is_circular:
        raise LayoutMismatch("slicing requires a scan covering the full circle")
    if abs(db_scan.start_angle) > 1e-12:
        raise LayoutMismatch("circular scans must start at angle 0")
    angles = heading + start_angle + step * np.arange(n_rays)
    i0, i1, w = interp_table(db_scan.ranges.size, angles)
    ranges, ok = interp_circular(db_scan.ranges, db_scan.valid, i0, i1, w)
    return RayScan(start_angle, step, ranges, db_scan.max_range, ok)


def fov_layout(fov: float, n_rays: int) -> tuple[float, float]:
    """``(start_angle, step)`` of ``n_rays`` rays spanning ``[-fov/2, fov/2]``."""
    if not (fov > 0 and fov <= TWO_PI + 1e-12):
        raise BadFov(f"field of view must be in (0, 2*pi], got {fov}")
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    if n_rays == 1:
        return 0.0, fov
    return -fov / 2.0, fov / (n_rays - 1)


def slice_fov_scan(db_scan: RayScan, heading: float, fov: float, n_rays: int) -> RayScan:
    """Interpolate ``n_rays`` rays across ``fov`` centred on ``heading``."""
    start, step = fov_layout(fov, n_rays)
    return slice_scan(db_scan, heading, start, step, n_rays)
