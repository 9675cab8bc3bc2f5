"""Virtual depth camera: pinhole projection with a ray-cast depth buffer,
Gaussian depth noise, and Bernoulli point dropout.

Only front-facing, unoccluded surface is returned; hidden-point removal falls
out of the per-pixel nearest-hit rule. ROI surfaces are strictly interior and
therefore never win the depth test.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyRenderError
from ..geometry import kernels
from ..geometry.cloud import ObservationCloud, normalize_cloud
from ..geometry.mesh import SegmentedObject


@dataclass(frozen=True)
class VirtualCamera:
    eye: tuple
    look_at: tuple
    width: int = 96
    height: int = 96
    fov_deg: float = 40.0
    noise_sigma: float = 0.0005  # meters along the viewing ray
    drop_fraction: float = 0.0
    max_points: int = 800
    up_hint: tuple = (0.0, 0.0, 1.0)

    def basis(self):
        eye = np.asarray(self.eye, dtype=np.float64)
        forward = np.asarray(self.look_at, dtype=np.float64) - eye
        forward = forward / np.linalg.norm(forward)
        up_hint = np.asarray(self.up_hint, dtype=np.float64)
        if abs(float(forward @ up_hint)) > 0.99:
            up_hint = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, up_hint)
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return eye, right, up, forward

    def to_dict(self) -> dict:
        return {
            "eye": list(np.asarray(self.eye, dtype=float)),
            "look_at": list(np.asarray(self.look_at, dtype=float)),
            "width": self.width,
            "height": self.height,
            "fov_deg": self.fov_deg,
            "noise_sigma": self.noise_sigma,
            "drop_fraction": self.drop_fraction,
            "max_points": self.max_points,
        }


@dataclass(frozen=True)
class CameraConfig:
    """Pose randomization: eye on a spherical cap around `axis` above the object."""

    cap_half_angle_deg: float = 50.0
    distance_range: tuple[float, float] = (2.0, 3.0)  # multiples of the bbox diagonal
    axis: tuple = (0.0, 0.0, 1.0)
    lookat_jitter: float = 0.1  # fraction of bbox diagonal
    width: int = 96
    height: int = 96
    fov_deg: float = 40.0
    noise_sigma: float = 0.0005
    drop_fraction: float = 0.0
    max_points: int = 800
    min_points: int = 32
    retries: int = 20


def random_camera(rng: np.random.Generator, obj: SegmentedObject, cfg: CameraConfig) -> VirtualCamera:
    lo, hi = obj.bounds()
    center = (lo + hi) / 2.0
    diag = float(np.linalg.norm(hi - lo))
    axis = np.asarray(cfg.axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    # orthonormal frame around the cap axis
    tmp = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, tmp)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    cos_min = np.cos(np.deg2rad(cfg.cap_half_angle_deg))
    cos_t = rng.uniform(cos_min, 1.0)
    sin_t = np.sqrt(1.0 - cos_t * cos_t)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    direction = cos_t * axis + sin_t * (np.cos(phi) * e1 + np.sin(phi) * e2)
    distance = rng.uniform(*cfg.distance_range) * diag
    eye = center + distance * direction
    look_at = center + cfg.lookat_jitter * diag * rng.uniform(-1.0, 1.0, size=3)
    return VirtualCamera(
        eye=tuple(eye),
        look_at=tuple(look_at),
        width=cfg.width,
        height=cfg.height,
        fov_deg=cfg.fov_deg,
        noise_sigma=cfg.noise_sigma,
        drop_fraction=cfg.drop_fraction,
        max_points=cfg.max_points,
    )


def render_points(obj: SegmentedObject, cam: VirtualCamera, rng: np.random.Generator, min_points: int = 4) -> np.ndarray:
    """Raw rendered surface points in world coordinates."""
    eye, right, up, forward = cam.basis()
    focal = 0.5 * cam.width / np.tan(np.deg2rad(cam.fov_deg) / 2.0)
    cx = (cam.width - 1) / 2.0
    cy = (cam.height - 1) / 2.0
    tris = np.concatenate([mesh.triangles for _, mesh in obj.segments])
    depth = kernels.rasterize_depth(
        np.ascontiguousarray(tris), eye, right, up, forward, focal, focal, cx, cy, cam.width, cam.height
    )
    vs, us = np.nonzero(np.isfinite(depth))  # row-major order: deterministic
    if len(vs) < min_points:
        raise EmptyRenderError(f"camera at {tuple(np.round(eye, 4))} saw {len(vs)} pixel(s)")
    t = depth[vs, us]
    dirs = (
        right[None, :] * ((us - cx) / focal)[:, None]
        + up[None, :] * ((vs - cy) / focal)[:, None]
        + forward[None, :]
    )
    points = eye[None, :] + t[:, None] * dirs
    if cam.noise_sigma > 0:
        ray_unit = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        points = points + rng.normal(0.0, cam.noise_sigma, size=len(points))[:, None] * ray_unit
    if cam.drop_fraction > 0:
        keep = rng.random(len(points)) >= cam.drop_fraction
        points = points[keep]
    if len(points) > cam.max_points:
        idx = np.sort(rng.choice(len(points), size=cam.max_points, replace=False))
        points = points[idx]
    if len(points) < min_points:
        raise EmptyRenderError(f"only {len(points)} points after dropout")
    return points


def render_cloud(obj: SegmentedObject, cam: VirtualCamera, rng: np.random.Generator, min_points: int = 4) -> ObservationCloud:
    """Rendered single-view cloud with its [-1,1]^3 normalization."""
    return normalize_cloud(render_points(obj, cam, rng, min_points=min_points))
