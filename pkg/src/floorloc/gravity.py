"""Virtual roll/pitch homography and visibility masks.

Camera coordinates are x right, y down, z forward. The rotation to the
gravity-aligned pose is ``R = R_pitch(theta) @ R_roll(psi)`` where

    R_roll(psi)    = [[c, -s, 0], [s, c, 0], [0, 0, 1]]      (about z)
    R_pitch(theta) = [[1, 0, 0], [0, c, s], [0, -s, c]]      (about x)

so a positive pitch moves the principal point's image down by
``fy * tan(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AtInfinity

_EPS_W = 1e-12


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point must lie within the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [[1.0 / self.fx, 0.0, -self.cx / self.fx], [0.0, 1.0 / self.fy, -self.cy / self.fy], [0.0, 0.0, 1.0]]
        )

    @property
    def horizontal_fov(self) -> float:
        return 2.0 * math.atan((self.width / 2.0) / self.fx)

    @classmethod
    def from_fov(cls, width: int, height: int, hfov: float) -> "Intrinsics":
        """Square pixels, centred principal point."""
        f = (width / 2.0) / math.tan(hfov / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height)


def roll_matrix(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pitch_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


@dataclass(frozen=True)
class GravityAlignment:
    roll_psi: float
    pitch_theta: float
    intrinsics: Intrinsics
    rotation: np.ndarray

    @classmethod
    def from_angles(cls, roll_psi: float, pitch_theta: float, intrinsics: Intrinsics) -> "GravityAlignment":
        rot = pitch_matrix(pitch_theta) @ roll_matrix(roll_psi)
        return cls(float(roll_psi), float(pitch_theta), intrinsics, rot)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.abs(rot @ rot.T - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)

    def inverse(self) -> "GravityAlignment":
        """Alignment that undoes this one (rotation transposed)."""
        return GravityAlignment(-self.roll_psi, -self.pitch_theta, self.intrinsics, self.rotation.T.copy())

    @property
    def homography(self) -> np.ndarray:
        k = self.intrinsics
        return k.K @ self.rotation @ k.K_inv

    @property
    def inverse_homography(self) -> np.ndarray:
        k = self.intrinsics
        return k.K @ self.rotation.T @ k.K_inv


def homography_warp(a: GravityAlignment, p) -> tuple[float, float]:
    """Map pixel ``p`` of the original image into the gravity-aligned image."""
    q = a.homography @ np.array([float(p[0]), float(p[1]), 1.0])
    if abs(q[2]) < _EPS_W:
        raise AtInfinity(f"pixel {tuple(p)} maps to infinity")
    return (q[0] / q[2], q[1] / q[2])


@dataclass(frozen=True)
class VisibilityMask:
    visible: np.ndarray
    column_spans: np.ndarray

    @property
    def width(self) -> int:
        return self.visible.shape[1]

    @property
    def height(self) -> int:
        return self.visible.shape[0]

    @property
    def fraction(self) -> float:
        return float(self.visible.mean())


def visibility_mask(a: GravityAlignment) -> VisibilityMask:
    """Pixels of the aligned image whose preimage lies inside the original image.

    Evaluated at pixel centres. ``column_spans[u] = (first, last)`` visible
    row, or ``(-1, -1)`` for a fully masked column.
    """
    k = a.intrinsics
    u, v = np.meshgrid(np.arange(k.width) + 0.5, np.arange(k.height) + 0.5)
    rays = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    # ray directions in the original camera frame
    src = rays @ a.rotation  # == (R^T @ ray) per pixel
    z = src[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        pu = k.fx * src[..., 0] / z + k.cx
        pv = k.fy * src[..., 1] / z + k.cy
    visible = (z > 0) & (pu >= 0) & (pu < k.width) & (pv >= 0) & (pv < k.height)
    any_vis = visible.any(axis=0)
    first = np.where(any_vis, visible.argmax(axis=0), -1)
    last = np.where(any_vis, k.height - 1 - visible[::-1].argmax(axis=0), -1)
    spans = np.stack([first, last], axis=1)
    visible.setflags(write=False)
    spans.setflags(write=False)
    return VisibilityMask(visible, spans)


def write_mask_pgm(mask: VisibilityMask, path):
    from PIL import Image

    Image.fromarray(np.where(mask.visible, 255, 0).astype(np.uint8)).save(path, format="PPM")


def alignment_from_config(cfg: dict) -> GravityAlignment:
    """Build from ``{"roll_deg", "pitch_deg", "fx", "fy", "cx", "cy", "width", "height"}``."""
    k = Intrinsics(float(cfg["fx"]), float(cfg["fy"]), float(cfg["cx"]), float(cfg["cy"]),
                   int(cfg["width"]), int(cfg["height"]))
    return GravityAlignment.from_angles(math.radians(cfg.get("roll_deg", 0.0)),
                                        math.radians(cfg.get("pitch_deg", 0.0)), k)
