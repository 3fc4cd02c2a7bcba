"""Inspection images for likelihood and posterior volumes."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def to_gray(values: np.ndarray, lo: float = None, hi: float = None) -> np.ndarray:
    """Map finite values linearly from ``[lo, hi]`` onto 0..255; non-finite -> 0.

    The result is flipped so that image row 0 is the top (max y) of the map.
    """
    finite = np.isfinite(values)
    if lo is None:
        lo = float(values[finite].min()) if finite.any() else 0.0
    if hi is None:
        hi = float(values[finite].max()) if finite.any() else 0.0
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    g = np.where(finite, np.rint((np.where(finite, values, lo) - lo) * scale), 0.0)
    if hi == lo:
        g = np.where(finite, 255.0, 0.0)
    return np.flipud(np.clip(g, 0, 255).astype(np.uint8))


def write_pgm(gray: np.ndarray, path):
    from PIL import Image

    Image.fromarray(gray).save(path, format="PPM")


def write_volume_pgms(volume: np.ndarray, out_dir, prefix: str = "bin") -> list:
    """One PGM per orientation bin plus ``<prefix>_max.pgm`` (max over bins).

    All images share the ``[min finite, max]`` range of the whole volume.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    finite = np.isfinite(volume)
    lo = float(volume[finite].min()) if finite.any() else 0.0
    hi = float(volume[finite].max()) if finite.any() else 0.0
    paths = []
    for k in range(volume.shape[0]):
        p = out_dir / f"{prefix}_{k:03d}.pgm"
        write_pgm(to_gray(volume[k], lo, hi), p)
        paths.append(p)
    p = out_dir / f"{prefix}_max.pgm"
    write_pgm(to_gray(volume.max(axis=0), lo, hi), p)
    paths.append(p)
    return paths
