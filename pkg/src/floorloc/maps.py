"""Synthetic floorplans used by the simulator, tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .floorplan import OccupancyGrid


def _cells(width_m: float, height_m: float, resolution: float) -> np.ndarray:
    w = int(round(width_m / resolution))
    h = int(round(height_m / resolution))
    return np.zeros((h, w), dtype=bool)


def _fill(cells, res, x0, y0, x1, y1):
    """Mark the metric rectangle ``[x0, x1) x [y0, y1)`` occupied."""
    c0, c1 = int(round(x0 / res)), int(round(x1 / res))
    r0, r1 = int(round(y0 / res)), int(round(y1 / res))
    cells[max(r0, 0) : r1, max(c0, 0) : c1] = True


def _border(cells):
    cells[0, :] = cells[-1, :] = True
    cells[:, 0] = cells[:, -1] = True


def empty_map(width: int, height: int, resolution: float = 0.1) -> OccupancyGrid:
    return OccupancyGrid(np.zeros((height, width), dtype=bool), resolution)


def box_room(width_m: float, height_m: float, resolution: float = 0.1, wall: int = 1) -> OccupancyGrid:
    """Axis-aligned room whose free interior measures ``width_m x height_m``."""
    w = int(round(width_m / resolution)) + 2 * wall
    h = int(round(height_m / resolution)) + 2 * wall
    cells = np.ones((h, w), dtype=bool)
    cells[wall : h - wall, wall : w - wall] = False
    return OccupancyGrid(cells, resolution, (-wall * resolution, -wall * resolution))


def two_room(resolution: float = 0.1) -> OccupancyGrid:
    """10 m x 8 m apartment: two rooms joined by a door, with furniture."""
    r = resolution
    cells = _cells(10.0, 8.0, r)
    _border(cells)
    _fill(cells, r, 6.0, 0.0, 6.2, 3.0)  # partition below the door
    _fill(cells, r, 6.0, 4.2, 6.2, 8.0)  # partition above the door
    _fill(cells, r, 1.2, 5.4, 2.6, 6.4)  # table, left room
    _fill(cells, r, 3.6, 0.1, 5.0, 0.8)  # cabinet along the bottom wall
    _fill(cells, r, 4.4, 3.0, 4.8, 3.4)  # pillar
    _fill(cells, r, 7.4, 5.6, 9.9, 6.4)  # counter, right room
    _fill(cells, r, 9.2, 1.0, 9.9, 2.4)  # shelf
    _fill(cells, r, 7.6, 1.6, 8.0, 2.0)  # small box
    return OccupancyGrid(cells, r)


def corridor(resolution: float = 0.1) -> OccupancyGrid:
    """A featureless 1.6 m wide corridor leading into an irregular room."""
    r = resolution
    cells = _cells(14.0, 6.0, r)
    cells[:] = True
    _free(cells, r, 0.2, 2.2, 9.0, 3.8)  # corridor
    _free(cells, r, 9.0, 0.2, 13.8, 5.8)  # room
    _fill(cells, r, 10.6, 3.6, 11.4, 4.6)  # obstacle
    _fill(cells, r, 12.4, 0.2, 13.8, 1.4)  # corner cabinet
    return OccupancyGrid(cells, r)


def _free(cells, res, x0, y0, x1, y1):
    c0, c1 = int(round(x0 / res)), int(round(x1 / res))
    r0, r1 = int(round(y0 / res)), int(round(y1 / res))
    cells[r0:r1, c0:c1] = False


def random_floorplan(rng: np.random.Generator, width_m: float = 8.0, height_m: float = 6.0,
                     resolution: float = 0.1, n_obstacles: int = 6) -> OccupancyGrid:
    """Bordered room with random rectangular obstacles and an optional partition."""
    r = resolution
    cells = _cells(width_m, height_m, r)
    _border(cells)
    for _ in range(n_obstacles):
        w = rng.uniform(0.3, 1.5)
        h = rng.uniform(0.3, 1.5)
        x0 = rng.uniform(0.5, width_m - w - 0.5)
        y0 = rng.uniform(0.5, height_m - h - 0.5)
        _fill(cells, r, x0, y0, x0 + w, y0 + h)
    if rng.random() < 0.5:
        x = rng.uniform(0.35, 0.65) * width_m
        door = rng.uniform(1.0, height_m - 2.0)
        _fill(cells, r, x, 0.0, x + 0.2, door)
        _fill(cells, r, x, door + 1.0, x + 0.2, height_m)
    return OccupancyGrid(cells, r)


def apartment(resolution: float = 0.1) -> OccupancyGrid:
    """18.4 m x 15.5 m multi-room floorplan (184 x 155 cells at 0.1 m)."""
    r = resolution
    cells = _cells(18.4, 15.5, r)
    _border(cells)
    # hallway walls with door gaps
    _fill(cells, r, 0.0, 6.0, 4.0, 6.2)
    _fill(cells, r, 5.2, 6.0, 11.0, 6.2)
    _fill(cells, r, 12.2, 6.0, 18.4, 6.2)
    _fill(cells, r, 0.0, 8.0, 7.0, 8.2)
    _fill(cells, r, 8.2, 8.0, 18.4, 8.2)
    # room partitions
    _fill(cells, r, 6.0, 0.0, 6.2, 6.0)
    _fill(cells, r, 12.0, 0.0, 12.2, 4.6)
    _fill(cells, r, 9.0, 8.2, 9.2, 12.0)
    _fill(cells, r, 9.0, 13.2, 9.2, 15.5)
    _fill(cells, r, 14.0, 8.2, 14.2, 15.5)
    # furniture
    for box in [(1.0, 1.0, 2.5, 2.0), (3.5, 3.5, 4.5, 5.0), (7.5, 1.0, 10.0, 2.0),
                (15.0, 2.0, 17.0, 3.0), (2.0, 11.0, 4.0, 13.0), (10.5, 10.0, 11.5, 11.0),
                (16.0, 12.0, 18.3, 14.0), (13.0, 2.5, 13.6, 5.0)]:
        _fill(cells, r, *box)
    return OccupancyGrid(cells, r)
