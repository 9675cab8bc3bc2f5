"""FastAPI inference service wrapping the core package."""
from .app import create_app
from .core import ModelRegistry, explain_op, infer_op, plan_op, uncertainty_op

__all__ = ["ModelRegistry", "create_app", "explain_op", "infer_op", "plan_op", "uncertainty_op"]
