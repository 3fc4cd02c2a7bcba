"""Occupancy floorplans and exact grid raycasting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import FormatError, OriginOccupied, OriginOutOfMap
from .geometry import TWO_PI, Pose
from .scan import RayScan, fov_layout

NO_HIT = -1.0
# boundary crossings closer than this (m) are treated as passing through a cell corner
_CORNER_TOL = 1e-10


@dataclass(eq=False)
class OccupancyGrid:
    """Boolean occupancy grid.

    ``cells[iy, ix]`` covers ``[ox + ix*res, ox + (ix+1)*res) x
    [oy + iy*res, oy + (iy+1)*res)``; row 0 is the bottom of the map (y-up).
    """

    cells: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ValueError(f"cells must be a non-empty 2D array, got shape {cells.shape}")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        cells.setflags(write=False)
        self.cells = cells
        self.resolution = float(self.resolution)
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def free_mask(self) -> np.ndarray:
        return ~self.cells

    def world_to_cell(self, x: float, y: float):
        """Cell ``(ix, iy)`` containing a world point, or ``None`` when out of map."""
        ix = math.floor((x - self.origin[0]) / self.resolution)
        iy = math.floor((y - self.origin[1]) / self.resolution)
        if 0 <= ix < self.width and 0 <= iy < self.height:
            return ix, iy
        return None

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def is_free(self, x: float, y: float) -> bool:
        c = self.world_to_cell(x, y)
        return c is not None and not self.cells[c[1], c[0]]

    def transpose(self) -> "OccupancyGrid":
        """Swap the x and y axes (mirror about the line y = x through the origin)."""
        return OccupancyGrid(self.cells.T.copy(), self.resolution, (self.origin[1], self.origin[0]))


# --- raycasting -------------------------------------------------------------


@numba.njit(cache=True)
def _cast(occ, ox, oy, res, x, y, theta, max_range):
    h, w = occ.shape
    ix = int(math.floor((x - ox) / res))
    iy = int(math.floor((y - oy) / res))
    dx = math.cos(theta)
    dy = math.sin(theta)
    sx = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    sy = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    while True:
        # distance to the next vertical / horizontal cell boundary
        if sx != 0:
            bx = ox + (ix + (1 if sx > 0 else 0)) * res
            tx = (bx - x) / dx
        else:
            tx = math.inf
        if sy != 0:
            by = oy + (iy + (1 if sy > 0 else 0)) * res
            ty = (by - y) / dy
        else:
            ty = math.inf
        if abs(tx - ty) <= _CORNER_TOL:
            # through a cell corner: grazing either side cell counts as a hit
            t = min(tx, ty)
            if t >= max_range:
                return NO_HIT
            ax, ay = ix + sx, iy + sy
            if 0 <= ax < w and occ[iy, ax] or 0 <= ay < h and occ[ay, ix]:
                return max(t, 0.0)
            ix, iy = ax, ay
        elif tx < ty:
            t = tx
            ix += sx
        else:
            t = ty
            iy += sy
        if t >= max_range:
            return NO_HIT
        if ix < 0 or iy < 0 or ix >= w or iy >= h:
            return NO_HIT
        if occ[iy, ix]:
            return max(t, 0.0)


@numba.njit(cache=True, parallel=True)
def _cast_fan(occ, ox, oy, res, xs, ys, angles, max_range):
    """Cast every angle from every origin; output shape ``(len(xs), len(angles))``."""
    n = xs.shape[0]
    m = angles.shape[0]
    out = np.empty((n, m))
    for i in numba.prange(n):
        for k in range(m):
            out[i, k] = _cast(occ, ox, oy, res, xs[i], ys[i], angles[k], max_range)
    return out


def _check_origin(grid: OccupancyGrid, x: float, y: float):
    c = grid.world_to_cell(x, y)
    if c is None:
        raise OriginOutOfMap(f"origin ({x}, {y}) lies outside the map")
    if grid.cells[c[1], c[0]]:
        raise OriginOccupied(f"origin ({x}, {y}) lies in an occupied cell")


def cast_ray(grid: OccupancyGrid, origin, angle: float, max_range: float):
    """Distance to the first occupied-cell boundary along a ray, or ``None``.

    ``None`` means no occupied cell lies within ``max_range`` before the ray
    leaves the map.
    """
    x, y = float(origin[0]), float(origin[1])
    _check_origin(grid, x, y)
    d = _cast(grid.cells, grid.origin[0], grid.origin[1], grid.resolution, x, y, float(angle), float(max_range))
    return None if d < 0 else d


def cast_fan(grid: OccupancyGrid, xs, ys, angles, max_range: float) -> np.ndarray:
    """Vectorised raycasting without origin validation; no-hit yields ``-1``."""
    return _cast_fan(
        grid.cells,
        grid.origin[0],
        grid.origin[1],
        grid.resolution,
        np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64),
        np.ascontiguousarray(angles, dtype=np.float64),
        float(max_range),
    )


def _as_scan(d: np.ndarray, start: float, step: float, max_range: float) -> RayScan:
    valid = d >= 0
    return RayScan(start, step, np.where(valid, d, max_range), max_range, valid)


def circular_angles(ray_count: int) -> np.ndarray:
    return np.arange(ray_count) * (TWO_PI / ray_count)


def render_circular_scan(grid: OccupancyGrid, position, ray_count: int, max_range: float) -> RayScan:
    """Full-circle scan with rays at ``k * 2*pi / ray_count`` (world frame)."""
    x, y = float(position[0]), float(position[1])
    _check_origin(grid, x, y)
    d = cast_fan(grid, [x], [y], circular_angles(ray_count), max_range)[0]
    return _as_scan(d, 0.0, TWO_PI / ray_count, max_range)


def render_scan(grid: OccupancyGrid, pose: Pose, start_angle: float, step: float, n_rays: int, max_range: float) -> RayScan:
    """Direct rendering of an equiangular scan at ``pose``."""
    _check_origin(grid, pose.x, pose.y)
    angles = pose.phi + start_angle + step * np.arange(n_rays)
    d = cast_fan(grid, [pose.x], [pose.y], angles, max_range)[0]
    return _as_scan(d, start_angle, step, max_range)


def render_fov_scan(grid: OccupancyGrid, pose: Pose, fov: float, n_rays: int, max_range: float) -> RayScan:
    start, step = fov_layout(fov, n_rays)
    return render_scan(grid, pose, start, step, n_rays, max_range)


# --- file I/O ---------------------------------------------------------------


def sidecar_path(image_path) -> Path:
    return Path(image_path).with_suffix(".json")


def load_floorplan(path) -> OccupancyGrid:
    """Load a PGM/PNG floorplan plus its ``.json`` sidecar.

    Pixels darker than 128 are occupied; image row 0 is the top of the map.
    """
    from PIL import Image

    path = Path(path)
    meta_path = sidecar_path(path)
    try:
        meta = json.loads(meta_path.read_text())
        resolution = float(meta["resolution_m"])
        origin = tuple(float(v) for v in meta.get("origin_m", (0.0, 0.0)))
    except FileNotFoundError as exc:
        raise FormatError(f"missing sidecar {meta_path}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad sidecar {meta_path}: {exc}") from exc
    with Image.open(path) as im:
        pix = np.asarray(im.convert("L"))
    return OccupancyGrid(np.flipud(pix < 128), resolution, origin)


def save_floorplan(grid: OccupancyGrid, path):
    """Write ``grid`` as an image (format from suffix) plus sidecar JSON."""
    from PIL import Image

    path = Path(path)
    pix = np.where(np.flipud(grid.cells), 0, 255).astype(np.uint8)
    Image.fromarray(pix).save(path)
    sidecar_path(path).write_text(
        json.dumps({"resolution_m": grid.resolution, "origin_m": list(grid.origin)}, indent=2) + "\n"
    )
