"""Observation point clouds and the uniform [-1,1]^3 normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCloudError

_MIN_POINTS = 4
_PLANAR_RATIO = 1e-6


@dataclass(frozen=True)
class ObservationCloud:
    """Single-view surface point cloud with its normalization transform.

    points are raw world coordinates (meters); normalized = scale * p + offset
    maps the cloud into [-1,1]^3 with one scale for all axes.
    """

    points: np.ndarray
    scale: float
    offset: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def normalized(self) -> np.ndarray:
        return self.points * self.scale + self.offset

    def to_normalized(self, world_points: np.ndarray) -> np.ndarray:
        return np.asarray(world_points, dtype=np.float64) * self.scale + self.offset

    def to_world(self, normalized_points: np.ndarray) -> np.ndarray:
        return (np.asarray(normalized_points, dtype=np.float64) - self.offset) / self.scale

    def distance_to_world(self, normalized_distance):
        """Distances scale uniformly by 1/scale."""
        return np.asarray(normalized_distance) / self.scale

    def with_points(self, points: np.ndarray) -> "ObservationCloud":
        """Same transform, different points (e.g. a masked or noised cloud)."""
        return ObservationCloud(np.asarray(points, dtype=np.float64), self.scale, self.offset)


def normalize_cloud(points: np.ndarray) -> ObservationCloud:
    """Center the cloud and scale its longest bounding-box axis to [-1, 1].

    Raises DegenerateCloudError for fewer than 4 points or a (near-)planar
    bounding box, which cannot anchor a stable 3D normalization.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(pts) < _MIN_POINTS:
        raise DegenerateCloudError(f"need at least {_MIN_POINTS} points, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise DegenerateCloudError("non-finite coordinates in cloud")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise DegenerateCloudError("cloud bounding box has zero extent")
    if float(extent.min()) < _PLANAR_RATIO * longest:
        raise DegenerateCloudError("cloud is planar-degenerate")
    center = (lo + hi) / 2.0
    scale = 2.0 / longest
    return ObservationCloud(pts, scale, -scale * center)
