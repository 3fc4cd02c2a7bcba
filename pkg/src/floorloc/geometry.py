"""SE(2) poses, ego-motions and angle helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_2pi(a: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    w = math.fmod(a, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    # fmod of a tiny negative number plus 2*pi rounds up to exactly 2*pi
    if w >= TWO_PI:
        w = 0.0
    return w


def wrap_pi(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.pi - wrap_2pi(math.pi - a)
    return w


def angle_diff(a: float, b: float) -> float:
    """Absolute circular difference between two angles, in [0, pi]."""
    return abs(wrap_pi(a - b))


@dataclass(frozen=True)
class Pose:
    """Camera pose in the floorplan frame; ``phi`` is kept in [0, 2*pi)."""

    x: float
    y: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "phi", wrap_2pi(float(self.phi)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.phi)


@dataclass(frozen=True)
class EgoMotion:
    """Relative motion expressed in the body frame of the previous pose.

    ``tphi`` is kept in (-pi, pi].
    """

    tx: float = 0.0
    ty: float = 0.0
    tphi: float = 0.0

    def __post_init__(self):
        vals = (float(self.tx), float(self.ty), float(self.tphi))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite ego-motion {vals}")
        object.__setattr__(self, "tx", vals[0])
        object.__setattr__(self, "ty", vals[1])
        object.__setattr__(self, "tphi", wrap_pi(vals[2]))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.tx, self.ty, self.tphi)

    @property
    def translation(self) -> float:
        return math.hypot(self.tx, self.ty)


def pose_compose(s: Pose, t: EgoMotion) -> Pose:
    """Apply ego-motion ``t`` to pose ``s`` (the ``s (+) t`` operator)."""
    c, sn = math.cos(s.phi), math.sin(s.phi)
    return Pose(s.x + c * t.tx - sn * t.ty, s.y + sn * t.tx + c * t.ty, s.phi + t.tphi)


def motion_compose(a: EgoMotion, b: EgoMotion) -> EgoMotion:
    """Motion equivalent to applying ``a`` then ``b``."""
    c, sn = math.cos(a.tphi), math.sin(a.tphi)
    return EgoMotion(a.tx + c * b.tx - sn * b.ty, a.ty + sn * b.tx + c * b.ty, a.tphi + b.tphi)


def motion_inverse(t: EgoMotion) -> EgoMotion:
    c, sn = math.cos(t.tphi), math.sin(t.tphi)
    return EgoMotion(-(c * t.tx + sn * t.ty), -(-sn * t.tx + c * t.ty), -t.tphi)


def relative_motion(a: Pose, b: Pose) -> EgoMotion:
    """Ego-motion ``t`` such that ``pose_compose(a, t) == b``."""
    dx, dy = b.x - a.x, b.y - a.y
    c, sn = math.cos(a.phi), math.sin(a.phi)
    return EgoMotion(c * dx + sn * dy, -sn * dx + c * dy, b.phi - a.phi)
