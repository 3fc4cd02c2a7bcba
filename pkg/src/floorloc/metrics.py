"""Localization metrics: recall at thresholds, success rate and RMSE."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import LengthMismatch, TooShort
from .geometry import Pose, angle_diff

# (label, max position error in m, max orientation error in rad or None)
DEFAULT_RECALL_THRESHOLDS = (
    ("0.1m", 0.1, None),
    ("0.5m", 0.5, None),
    ("1m", 1.0, None),
    ("1m30deg", 1.0, math.radians(30.0)),
)
DEFAULT_SUCCESS_RADII = (0.5, 1.0, 2.0)
LAST_K = 10


def position_errors(predictions: Sequence[Pose], truths: Sequence[Pose]) -> np.ndarray:
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    return np.array([math.hypot(p.x - t.x, p.y - t.y) for p, t in zip(predictions, truths)])


def recall_at(predictions: Sequence[Pose], truths: Sequence[Pose],
              thresholds=DEFAULT_RECALL_THRESHOLDS) -> dict:
    """Percentage of predictions within each (distance[, angle]) threshold."""
    if len(predictions) != len(truths):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truths)} truths")
    if not predictions:
        raise LengthMismatch("need at least one prediction")
    pos = position_errors(predictions, truths)
    ang = np.array([angle_diff(p.phi, t.phi) for p, t in zip(predictions, truths)])
    out = {}
    for label, dist, angle in thresholds:
        hit = pos <= dist
        if angle is not None:
            hit &= ang <= angle + 1e-12
        out[label] = 100.0 * float(hit.mean())
    return out


@dataclass
class SuccessResult:
    success: bool
    rmse_succeeded: Optional[float]
    rmse_all: float
    errors: np.ndarray = field(repr=False, default=None)


def success_and_rmse(predictions: Sequence[Pose], truths: Sequence[Pose], radius_m: float,
                     last_k: int = LAST_K) -> SuccessResult:
    """A run succeeds when each of its last ``last_k`` position errors is within ``radius_m``."""
    err = position_errors(predictions, truths)
    if err.size < last_k:
        raise TooShort(f"track has {err.size} frames, need {last_k}")
    tail = err[-last_k:]
    rmse = float(np.sqrt(np.mean(tail**2)))
    ok = bool(np.all(tail <= radius_m))
    return SuccessResult(ok, rmse if ok else None, rmse, tail)


@dataclass
class EvalReport:
    recall: dict
    success_rate_at: dict
    rmse_succeeded: Optional[float]
    rmse_all: float
    n_runs: int
    n_frames: int
    rmse_radius_m: float = 1.0
    timing: Optional[dict] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["timing"] is None:
            d.pop("timing")
        return d


def evaluate_runs(runs: Sequence[tuple], success_radii=DEFAULT_SUCCESS_RADII, rmse_radius: float = 1.0,
                  last_k: int = LAST_K, thresholds=DEFAULT_RECALL_THRESHOLDS) -> EvalReport:
    """Aggregate ``(predictions, truths)`` pairs.

    Recall pools every frame of every run. RMSEs pool the last ``last_k``
    errors of the succeeded runs (at ``rmse_radius``) or of all runs.
    """
    if not runs:
        raise LengthMismatch("no runs to evaluate")
    preds = [p for r in runs for p in r[0]]
    truths = [t for r in runs for t in r[1]]
    recall = recall_at(preds, truths, thresholds)
    rates = {}
    for radius in success_radii:
        hits = [success_and_rmse(p, t, radius, last_k).success for p, t in runs]
        rates[f"{radius:g}"] = 100.0 * sum(hits) / len(runs)
    results = [success_and_rmse(p, t, rmse_radius, last_k) for p, t in runs]
    all_sq = np.concatenate([r.errors**2 for r in results])
    ok_sq = [r.errors**2 for r in results if r.success]
    return EvalReport(
        recall=recall,
        success_rate_at=rates,
        rmse_succeeded=float(np.sqrt(np.mean(np.concatenate(ok_sq)))) if ok_sq else None,
        rmse_all=float(np.sqrt(np.mean(all_sq))),
        n_runs=len(runs),
        n_frames=len(preds),
        rmse_radius_m=rmse_radius,
    )


def success_vs_history(runs: Sequence[tuple], histories: Sequence[int], radius_m: float,
                       last_k: int = LAST_K) -> dict:
    """Success rate when each run is cut to its first ``n`` frames, per ``n`` in ``histories``."""
    out = {}
    for n in histories:
        hits = [success_and_rmse(p[:n], t[:n], radius_m, last_k).success for p, t in runs]
        out[n] = 100.0 * sum(hits) / len(runs)
    return out
