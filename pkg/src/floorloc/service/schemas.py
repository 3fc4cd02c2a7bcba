from typing import List, Optional

from pydantic import BaseModel, Field


class ScanModel(BaseModel):
    start_angle: float
    step: float = Field(gt=0)
    max_range: float = Field(gt=0)
    ranges: List[float]
    valid: Optional[List[bool]] = None


class LocalizeRequest(BaseModel):
    scan: ScanModel
    orientations: int = Field(36, ge=1)


class LocalizeResponse(BaseModel):
    pose: List[float]
    log_lik: float


class SessionCreate(BaseModel):
    sigma_xy: float = Field(0.05, gt=0)
    sigma_phi_deg: float = Field(3.0, gt=0)
    orientations: int = Field(36, ge=1)


class SessionInfo(BaseModel):
    session_id: str
    steps: int
    orientations: int


class StepRequest(BaseModel):
    ego: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)
    scan: ScanModel


class StepResponse(BaseModel):
    step: int
    pose: List[float]
    probability: float


class HealthResponse(BaseModel):
    status: str
    width: int
    height: int
    resolution: float
    free_cells: int
    ray_count: int


class GravityRequest(BaseModel):
    roll_deg: float = 0.0
    pitch_deg: float = 0.0
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


class WarpRequest(GravityRequest):
    pixels: List[List[float]]


class WarpResponse(BaseModel):
    pixels: List[List[float]]


class MaskResponse(BaseModel):
    visible_fraction: float
    column_spans: List[List[int]]
