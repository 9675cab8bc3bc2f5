"""Training-data generation: analytic deformations, virtual depth camera, ISS."""
from .camera import CameraConfig, VirtualCamera, random_camera, render_cloud, render_points
from .dataset import TrainingSample, generate_dataset, load_dataset, load_manifest, make_sample
from .fields import DeformationField, FieldConfig, deform, jacobian_determinants, random_admissible_field
from .iss import IssResult, iss_sample

__all__ = [
    "CameraConfig",
    "DeformationField",
    "FieldConfig",
    "IssResult",
    "TrainingSample",
    "VirtualCamera",
    "deform",
    "generate_dataset",
    "iss_sample",
    "jacobian_determinants",
    "load_dataset",
    "load_manifest",
    "make_sample",
    "random_admissible_field",
    "random_camera",
    "render_cloud",
    "render_points",
]
