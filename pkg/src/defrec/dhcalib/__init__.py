"""Serial-arm forward kinematics and DH-parameter calibration."""
from .calibrate import (
    CalibConfig,
    CalibData,
    CalibResult,
    calib_loss,
    calibrate,
    loss_and_grad,
    position_errors,
)
from .chain import DHChain, dh_matrix, fk, fk_batch, quat_distance, quat_from_matrix, quat_multiply, quat_to_matrix
from .trackersim import default_arm, generate_tracker_data, perturbed_truth

__all__ = [
    "CalibConfig",
    "CalibData",
    "CalibResult",
    "DHChain",
    "calib_loss",
    "calibrate",
    "default_arm",
    "dh_matrix",
    "fk",
    "fk_batch",
    "generate_tracker_data",
    "loss_and_grad",
    "perturbed_truth",
    "position_errors",
    "quat_distance",
    "quat_from_matrix",
    "quat_multiply",
    "quat_to_matrix",
]
