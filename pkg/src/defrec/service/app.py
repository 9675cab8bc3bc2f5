"""FastAPI application exposing the reconstruction runtime.

Endpoints wrap the operations in service.core; models are loaded once into a
registry and shared by all requests (inference is read-only and thread-safe).
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import DefrecError
from . import schemas
from .core import ModelRegistry, explain_op, infer_op, plan_op, uncertainty_op


def create_app(registry: ModelRegistry | None = None) -> FastAPI:
    registry = registry if registry is not None else ModelRegistry()
    app = FastAPI(title="defrec inference service", version=__version__)
    app.state.registry = registry

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(version=__version__, models_loaded=len(registry))

    @app.post("/models/load", response_model=schemas.ModelInfo)
    def load_model(req: schemas.LoadModelRequest):
        try:
            model_id = registry.load(req.path, req.model_id)
        except (DefrecError, OSError) as err:
            raise HTTPException(status_code=400, detail=str(err))
        return next(info for info in registry.info() if info.model_id == model_id)

    @app.get("/models", response_model=schemas.ModelListResponse)
    def list_models():
        return schemas.ModelListResponse(models=registry.info())

    @app.post("/infer", response_model=schemas.InferResponse)
    def infer(req: schemas.InferRequest):
        return _run(infer_op, registry, req)

    @app.post("/plan", response_model=schemas.PlanResponse)
    def plan(req: schemas.PlanRequest):
        try:
            return plan_op(req)
        except (DefrecError, OSError) as err:
            raise HTTPException(status_code=400, detail=str(err))

    @app.post("/uncertainty", response_model=schemas.UncertaintyResponse)
    def uncertainty(req: schemas.UncertaintyRequest):
        return _run(uncertainty_op, registry, req)

    @app.post("/explain", response_model=schemas.ExplainResponse)
    def explain(req: schemas.ExplainRequest):
        return _run(explain_op, registry, req)

    return app


def _run(op, registry, req):
    try:
        return op(registry, req)
    except KeyError as err:
        raise HTTPException(status_code=404, detail=str(err))
    except (DefrecError, OSError, ValueError) as err:
        raise HTTPException(status_code=400, detail=str(err))
