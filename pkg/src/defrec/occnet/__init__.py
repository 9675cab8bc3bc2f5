"""Conditioned occupancy network with signed-distance head."""
from .encoding import ENCODING_DIM, FREQ_EXPONENTS, encode_query
from .model import MIN_CLOUD_POINTS, ModelConfig, OccupancyModel, combined_loss
from .train import TrainConfig, TrainResult, train, train_on_samples, write_loss_curve

__all__ = [
    "ENCODING_DIM",
    "FREQ_EXPONENTS",
    "MIN_CLOUD_POINTS",
    "ModelConfig",
    "OccupancyModel",
    "TrainConfig",
    "TrainResult",
    "combined_loss",
    "encode_query",
    "train",
    "train_on_samples",
    "write_loss_curve",
]
