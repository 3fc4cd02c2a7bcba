"""FastAPI application wrapping one pose-ray database."""

from __future__ import annotations

import itertools
import math
import threading

import numpy as np
from fastapi import FastAPI, HTTPException

from ..database import PoseRayDatabase, read_database
from ..errors import FloorlocError
from ..geometry import EgoMotion
from ..gravity import alignment_from_config, homography_warp, visibility_mask
from ..hfilter import MotionNoise, build_transition_kernel, init_uniform, posterior_readout, predict, update
from ..observation import argmax_pose, likelihood_volume
from ..scan import RayScan
from . import schemas


def _scan(m: schemas.ScanModel) -> RayScan:
    try:
        return RayScan(m.start_angle, m.step, np.asarray(m.ranges, dtype=float), m.max_range,
                       None if m.valid is None else np.asarray(m.valid, dtype=bool))
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from exc


class _Session:
    def __init__(self, db, noise, orientations):
        self.noise = noise
        self.orientations = orientations
        self.belief = init_uniform(db.free_mask, orientations, db.resolution, db.origin)
        self.steps = 0
        self.last = None
        self.lock = threading.Lock()


def create_app(db) -> FastAPI:
    """Build the app around a database instance or a path to an ``.flrd`` file."""
    if not isinstance(db, PoseRayDatabase):
        db = read_database(db)
    app = FastAPI(title="floorloc")
    sessions: dict = {}
    ids = itertools.count(1)
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> _Session:
        s = sessions.get(session_id)
        if s is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return s

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", width=db.width, height=db.height, resolution=db.resolution,
                                      free_cells=db.n_free, ray_count=db.ray_count)

    @app.post("/localize", response_model=schemas.LocalizeResponse)
    def localize(req: schemas.LocalizeRequest):
        try:
            pose, ll = argmax_pose(likelihood_volume(_scan(req.scan), db, req.orientations))
        except FloorlocError as exc:
            raise HTTPException(422, str(exc)) from exc
        return schemas.LocalizeResponse(pose=list(pose.as_tuple()), log_lik=ll)

    @app.post("/sessions", response_model=schemas.SessionInfo, status_code=201)
    def create_session(req: schemas.SessionCreate):
        noise = MotionNoise(req.sigma_xy, req.sigma_xy, math.radians(req.sigma_phi_deg))
        with registry_lock:
            sid = f"s{next(ids)}"
            sessions[sid] = _Session(db, noise, req.orientations)
        return schemas.SessionInfo(session_id=sid, steps=0, orientations=req.orientations)

    @app.get("/sessions/{session_id}", response_model=schemas.StepResponse)
    def session_state(session_id: str):
        s = get_session(session_id)
        if s.last is None:
            raise HTTPException(409, "session has no observations yet")
        return s.last

    @app.post("/sessions/{session_id}/steps", response_model=schemas.StepResponse)
    def session_step(session_id: str, req: schemas.StepRequest):
        s = get_session(session_id)
        scan = _scan(req.scan)
        with s.lock:
            try:
                belief = s.belief
                if s.steps > 0:
                    kernel = build_transition_kernel(EgoMotion(*req.ego), s.noise, db.resolution, s.orientations)
                    belief = predict(belief, kernel)
                belief = update(belief, likelihood_volume(scan, db, s.orientations))
            except (FloorlocError, ValueError) as exc:
                raise HTTPException(422, str(exc)) from exc
            s.belief = belief
            r = posterior_readout(belief, with_marginal=False)
            s.last = schemas.StepResponse(step=s.steps, pose=list(r.pose.as_tuple()), probability=r.probability)
            s.steps += 1
            return s.last

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        with registry_lock:
            if sessions.pop(session_id, None) is None:
                raise HTTPException(404, f"unknown session {session_id}")

    @app.post("/gravity/warp", response_model=schemas.WarpResponse)
    def gravity_warp(req: schemas.WarpRequest):
        try:
            a = alignment_from_config(req.model_dump())
            return schemas.WarpResponse(pixels=[list(homography_warp(a, p)) for p in req.pixels])
        except (FloorlocError, ValueError) as exc:
            raise HTTPException(422, str(exc)) from exc

    @app.post("/gravity/mask", response_model=schemas.MaskResponse)
    def gravity_mask(req: schemas.GravityRequest):
        try:
            m = visibility_mask(alignment_from_config(req.model_dump()))
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        return schemas.MaskResponse(visible_fraction=m.fraction, column_spans=m.column_spans.tolist())

    return app
