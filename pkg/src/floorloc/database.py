"""Offline pose-ray database: one circular scan per free cell centre."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .floorplan import OccupancyGrid, cast_fan, circular_angles
from .geometry import TWO_PI
from .scan import RayScan

DEFAULT_RAY_COUNT = 120
DEFAULT_MAX_RANGE = 15.0

MAGIC = b"FLRD"
VERSION = 1
# magic, version, ray_count, max_range, width, height, resolution, origin x/y
_HEADER = struct.Struct("<4sHIfIIfff")


@dataclass(eq=False)
class PoseRayDatabase:
    """Circular scans for every free cell, stored densely in row-major cell order.

    ``ranges[i]`` belongs to the ``i``-th free cell in row-major order
    (``free_mask.ravel()``); no-hit rays hold ``max_range`` and are invalid.
    """

    free_mask: np.ndarray
    ranges: np.ndarray
    valid: np.ndarray
    ray_count: int
    max_range: float
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.free_mask = np.asarray(self.free_mask, dtype=bool)
        self.ranges = np.asarray(self.ranges, dtype=np.float64).reshape(-1, self.ray_count)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(self.ranges.shape)
        if self.ranges.shape[0] != int(self.free_mask.sum()):
            raise ValueError("one circular scan is required per free cell")
        for a in (self.free_mask, self.ranges, self.valid):
            a.setflags(write=False)
        self.cell_ids = np.flatnonzero(self.free_mask.ravel())
        self.cell_ids.setflags(write=False)

    @property
    def width(self) -> int:
        return self.free_mask.shape[1]

    @property
    def height(self) -> int:
        return self.free_mask.shape[0]

    @property
    def n_free(self) -> int:
        return self.ranges.shape[0]

    @property
    def angular_step(self) -> float:
        return TWO_PI / self.ray_count

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def index_of(self, ix: int, iy: int):
        """Row in ``ranges`` for cell ``(ix, iy)``, or ``None`` if not free."""
        if not (0 <= ix < self.width and 0 <= iy < self.height) or not self.free_mask[iy, ix]:
            return None
        return int(np.searchsorted(self.cell_ids, iy * self.width + ix))

    def scan(self, i: int) -> RayScan:
        return RayScan(0.0, self.angular_step, self.ranges[i], self.max_range, self.valid[i])

    def scan_at(self, ix: int, iy: int):
        i = self.index_of(ix, iy)
        return None if i is None else self.scan(i)

    @property
    def circular_rays(self):
        return [self.scan(i) for i in range(self.n_free)]


def build_ray_database(
    grid: OccupancyGrid, ray_count: int = DEFAULT_RAY_COUNT, max_range: float = DEFAULT_MAX_RANGE
) -> PoseRayDatabase:
    """Render a circular scan from the centre of every free cell."""
    if ray_count < 1:
        raise ValueError("ray_count must be >= 1")
    free = grid.free_mask
    iy, ix = np.nonzero(free)
    xs = grid.origin[0] + (ix + 0.5) * grid.resolution
    ys = grid.origin[1] + (iy + 0.5) * grid.resolution
    if xs.size:
        d = cast_fan(grid, xs, ys, circular_angles(ray_count), max_range)
    else:
        d = np.empty((0, ray_count))
    valid = d >= 0
    return PoseRayDatabase(
        free_mask=free,
        ranges=np.where(valid, d, max_range),
        valid=valid,
        ray_count=ray_count,
        max_range=float(max_range),
        resolution=grid.resolution,
        origin=grid.origin,
    )


def _f32_to_float(v) -> float:
    # shortest decimal that round-trips the stored float32, so 0.1 stays 0.1
    return float(np.format_float_positional(np.float32(v), unique=True, trim="-"))


def write_database(db: PoseRayDatabase, path):
    """Serialise to the little-endian ``FLRD`` format."""
    header = _HEADER.pack(
        MAGIC, VERSION, db.ray_count, db.max_range, db.width, db.height, db.resolution, *db.origin
    )
    bits = np.packbits(db.free_mask.ravel(), bitorder="little")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(bits.tobytes())
        fh.write(np.ascontiguousarray(db.ranges, dtype="<f4").tobytes())


def read_database(path) -> PoseRayDatabase:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, ray_count, max_range, w, h, res, ox, oy = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    nbits = w * h
    nbytes = (nbits + 7) // 8
    free = np.unpackbits(np.frombuffer(raw, np.uint8, nbytes, off), count=nbits, bitorder="little")
    free = free.astype(bool).reshape(h, w)
    off += nbytes
    n = int(free.sum())
    expected = off + 4 * n * ray_count
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    max_range = _f32_to_float(max_range)
    ranges = np.frombuffer(raw, "<f4", n * ray_count, off).astype(np.float64).reshape(n, ray_count)
    return PoseRayDatabase(
        free_mask=free,
        ranges=ranges,
        valid=ranges < max_range,
        ray_count=ray_count,
        max_range=max_range,
        resolution=_f32_to_float(res),
        origin=(_f32_to_float(ox), _f32_to_float(oy)),
    )
