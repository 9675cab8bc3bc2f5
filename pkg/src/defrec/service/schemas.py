"""Pydantic request/response models for the inference service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str
    models_loaded: int


class LoadModelRequest(BaseModel):
    path: str
    model_id: str | None = None  # defaults to the checkpoint stem


class ModelInfo(BaseModel):
    model_id: str
    path: str
    n_classes: int
    latent_dim: int
    dropout: float
    lambda_sd: float


class ModelListResponse(BaseModel):
    models: list[ModelInfo]


class InferRequest(BaseModel):
    model_id: str
    cloud_path: str | None = None
    points: list[list[float]] | None = None  # inline world-coordinate cloud
    n_dense: int = 40000
    n_coarse: int = 10000
    seed: int = 0
    out_path: str | None = None  # write the reconstruction file here
    include_points: bool = False  # inline the dense cloud into the response


class ReconstructionPoint(BaseModel):
    position: list[float]
    label: int
    probs: list[float]
    sdist: float


class InferResponse(BaseModel):
    model_id: str
    empty: bool
    n_points: int
    label_counts: dict[int, int]
    seed: int
    out_path: str | None = None
    points: list[ReconstructionPoint] | None = None


class PlanRequest(BaseModel):
    recon_path: str
    segment: int
    centroid: str = Field(default="geo", pattern="^(geo|uwc)$")
    standoff: float = 0.05


class PlanResponse(BaseModel):
    target: list[float]
    entry: list[float]
    direction: list[float]
    standoff: float


class UncertaintyRequest(BaseModel):
    model_id: str
    cloud_path: str | None = None
    points: list[list[float]] | None = None
    method: str = Field(default="mcd", pattern="^(activation|mcd)$")
    m: int = 30
    n_dense: int = 40000
    n_coarse: int = 10000
    seed: int = 0
    out_path: str | None = None


class UncertaintyResponse(BaseModel):
    model_id: str
    method: str
    h_global: float
    n_points: int
    empty: bool
    out_path: str | None = None


class ExplainRequest(BaseModel):
    model_id: str
    cloud_path: str | None = None
    points: list[list[float]] | None = None
    radius_frac: float = 0.2
    n_queries: int = 40000
    stride: int = 1
    seed: int = 0
    out_path: str | None = None


class ExplainResponse(BaseModel):
    model_id: str
    radius: float
    n_points: int
    mean_score: float
    scores: list[float] | None = None
    out_path: str | None = None
