"""Triangle-mesh objects, occupancy/signed-distance queries, and point clouds."""
from .cloud import ObservationCloud, normalize_cloud
from .io import load_obj, load_object, read_cloud_text, read_table, save_obj, save_object, write_cloud_text
from .mesh import SegmentedObject, TriangleMesh, occupancy_label, signed_distance

__all__ = [
    "ObservationCloud",
    "SegmentedObject",
    "TriangleMesh",
    "load_obj",
    "load_object",
    "normalize_cloud",
    "occupancy_label",
    "read_cloud_text",
    "read_table",
    "save_obj",
    "save_object",
    "signed_distance",
    "write_cloud_text",
]
