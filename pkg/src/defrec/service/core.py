"""Service operations over a model registry.

These functions are the single implementation behind both the HTTP endpoints
and the CLI runtime subcommands: the CLI calls them in-process by default and
over HTTP when pointed at a running server.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..analysis import activation_entropy, explain, global_uncertainty, mcd_entropy
from ..errors import DefrecError
from ..geometry.cloud import normalize_cloud
from ..geometry.io import read_cloud_text, write_cloud_text
from ..occnet.model import OccupancyModel
from ..reconstruct import dense_infer, geometric_centroid, load_reconstruction, plan_puncture, save_reconstruction, uwc_centroid
from . import schemas


class ModelRegistry:
    """Loaded models by id. Loading mutates; inference is read-only."""

    def __init__(self):
        self._models: dict[str, tuple[OccupancyModel, str]] = {}

    def load(self, path: str, model_id: str | None = None) -> str:
        model = OccupancyModel.load(path)
        model_id = model_id or Path(path).stem
        self._models[model_id] = (model, str(path))
        return model_id

    def get(self, model_id: str) -> OccupancyModel:
        if model_id not in self._models:
            raise KeyError(f"model {model_id!r} not loaded; POST /models/load first")
        return self._models[model_id][0]

    def info(self) -> list[schemas.ModelInfo]:
        return [
            schemas.ModelInfo(
                model_id=mid,
                path=path,
                n_classes=model.config.n_classes,
                latent_dim=model.config.latent_dim,
                dropout=model.config.dropout,
                lambda_sd=model.config.lambda_sd,
            )
            for mid, (model, path) in sorted(self._models.items())
        ]

    def __len__(self) -> int:
        return len(self._models)


def _request_cloud(req) -> "ObservationCloud":
    if req.cloud_path:
        points, _, _ = read_cloud_text(req.cloud_path)
    elif req.points:
        points = np.asarray(req.points, dtype=np.float64)
    else:
        raise DefrecError("request needs cloud_path or inline points")
    return normalize_cloud(points)


def infer_op(registry: ModelRegistry, req: schemas.InferRequest) -> schemas.InferResponse:
    model = registry.get(req.model_id)
    cloud = _request_cloud(req)
    recon = dense_infer(model, cloud, n_dense=req.n_dense, n_coarse=req.n_coarse, seed=req.seed)
    if req.out_path:
        save_reconstruction(req.out_path, recon)
    unique, counts = np.unique(recon.labels, return_counts=True)
    points = None
    if req.include_points:
        points = [
            schemas.ReconstructionPoint(
                position=[float(x) for x in recon.points_world[i]],
                label=int(recon.labels[i]),
                probs=[float(p) for p in recon.probs[i]],
                sdist=float(recon.sdists_world[i]),
            )
            for i in range(len(recon))
        ]
    return schemas.InferResponse(
        model_id=req.model_id,
        empty=recon.empty,
        n_points=len(recon),
        label_counts={int(u): int(c) for u, c in zip(unique, counts)},
        seed=req.seed,
        out_path=req.out_path,
        points=points,
    )


def plan_op(req: schemas.PlanRequest) -> schemas.PlanResponse:
    recon = load_reconstruction(req.recon_path)
    if req.centroid == "uwc":
        target = uwc_centroid(recon, req.segment)
    else:
        target = geometric_centroid(recon, req.segment)
    plan = plan_puncture(recon, target, standoff=req.standoff)
    return schemas.PlanResponse(**plan.to_dict())


def uncertainty_op(registry: ModelRegistry, req: schemas.UncertaintyRequest) -> schemas.UncertaintyResponse:
    model = registry.get(req.model_id)
    cloud = _request_cloud(req)
    recon = dense_infer(model, cloud, n_dense=req.n_dense, n_coarse=req.n_coarse, seed=req.seed)
    if recon.empty:
        return schemas.UncertaintyResponse(
            model_id=req.model_id, method=req.method, h_global=float("nan"),
            n_points=0, empty=True, out_path=None,
        )
    p_norm = cloud.normalized().astype(np.float32)
    if req.method == "activation":
        h = activation_entropy(model, p_norm, recon.points_norm)
    else:
        h = mcd_entropy(model, p_norm, recon.points_norm, m=req.m, seed=req.seed)
    recon = recon.with_uncertainties(h)
    if req.out_path:
        save_reconstruction(req.out_path, recon)
    return schemas.UncertaintyResponse(
        model_id=req.model_id,
        method=req.method,
        h_global=global_uncertainty(h),
        n_points=len(recon),
        empty=False,
        out_path=req.out_path,
    )


def explain_op(registry: ModelRegistry, req: schemas.ExplainRequest) -> schemas.ExplainResponse:
    model = registry.get(req.model_id)
    cloud = _request_cloud(req)
    emap = explain(
        model, cloud, radius_fraction=req.radius_frac, n_queries=req.n_queries,
        seed=req.seed, stride=req.stride,
    )
    if req.out_path:
        write_cloud_text(req.out_path, cloud.points, extra=emap.scores[:, None])
    return schemas.ExplainResponse(
        model_id=req.model_id,
        radius=emap.radius,
        n_points=len(emap.scores),
        mean_score=float(np.mean(emap.scores)),
        scores=None if req.out_path else [float(s) for s in emap.scores],
        out_path=req.out_path,
    )
