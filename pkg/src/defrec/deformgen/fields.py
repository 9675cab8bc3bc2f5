"""Analytic deformation fields standing in for FEM simulation.

A field maps points to displacements. Fields used for data generation blend to
zero over the attachment region at the base (the objects are glued to a rigid
mount) and are rejection-sampled so the deformation map stays locally
invertible and volume-plausible.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..errors import DeformationRejectedError
from ..geometry.mesh import SegmentedObject

JACOBIAN_DET_RANGE = (0.2, 5.0)
REJECTION_ATTEMPTS = 20


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class DeformationField:
    """One analytic displacement field.

    kind: "translate", "gaussian-push", "bend", "twist", or "composite".
    attachment: (z0, z1) range over which displacement ramps from 0 to full,
    or None for unattached fields (e.g. rigid translation in tests).
    """

    kind: str
    params: dict
    attachment: tuple[float, float] | None = None
    children: tuple = ()

    def displacement(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.kind == "composite":
            disp = np.zeros_like(pts)
            for child in self.children:
                disp += child.displacement(pts)
            return disp
        if self.kind == "translate":
            raw = np.broadcast_to(np.asarray(self.params["offset"], dtype=np.float64), pts.shape)
        elif self.kind == "gaussian-push":
            c = np.asarray(self.params["center"], dtype=np.float64)
            direction = np.asarray(self.params["direction"], dtype=np.float64)
            a = float(self.params["amplitude"])
            rho = float(self.params["rho"])
            w = np.exp(-np.sum((pts - c) ** 2, axis=1) / (2.0 * rho * rho))
            raw = a * w[:, None] * direction[None, :]
        elif self.kind == "bend":
            direction = np.asarray(self.params["direction"], dtype=np.float64)  # horizontal unit vector
            kappa = float(self.params["curvature"])
            z0 = float(self.params["z0"])
            s = kappa * np.maximum(pts[:, 2] - z0, 0.0) ** 2
            raw = s[:, None] * direction[None, :]
        elif self.kind == "twist":
            rate = float(self.params["rate"])
            cx, cy = self.params["center_xy"]
            z0 = float(self.params["z0"])
            phi = rate * (pts[:, 2] - z0)
            dx = pts[:, 0] - cx
            dy = pts[:, 1] - cy
            raw = np.zeros_like(pts)
            raw[:, 0] = dx * np.cos(phi) - dy * np.sin(phi) - dx
            raw[:, 1] = dx * np.sin(phi) + dy * np.cos(phi) - dy
        else:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.attachment is not None:
            z0, z1 = self.attachment
            raw = raw * _smoothstep((pts[:, 2] - z0) / (z1 - z0))[:, None]
        return raw

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "params": {k: _jsonable(v) for k, v in self.params.items()}}
        if self.attachment is not None:
            d["attachment"] = list(self.attachment)
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @staticmethod
    def from_dict(d: dict) -> "DeformationField":
        return DeformationField(
            kind=d["kind"],
            params=d.get("params", {}),
            attachment=tuple(d["attachment"]) if "attachment" in d else None,
            children=tuple(DeformationField.from_dict(c) for c in d.get("children", ())),
        )


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass(frozen=True)
class FieldConfig:
    """Sampling ranges for random training deformations."""

    amplitude: tuple[float, float] = (0.004, 0.02)
    rho: tuple[float, float] = (0.02, 0.05)
    bend_curvature: tuple[float, float] = (0.3, 1.5)
    twist_rate: tuple[float, float] = (1.0, 4.0)
    kind_weights: dict = dc_field(
        default_factory=lambda: {"gaussian-push": 0.6, "composite": 0.2, "bend": 0.1, "twist": 0.1}
    )
    attachment: tuple[float, float] = (0.0, 0.02)
    interaction_zmin: float = 0.03


def _surface_point(rng: np.random.Generator, obj: SegmentedObject, zmin: float) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted random point (and outward normal) on the body surface above zmin."""
    mesh = obj.mesh(1)
    tris = mesh.triangles
    areas = mesh.face_areas()
    above = tris[:, :, 2].min(axis=1) >= zmin
    weights = np.where(above, areas, 0.0)
    if weights.sum() <= 0:
        weights = areas
    weights = weights / weights.sum()
    for _ in range(64):
        t = int(rng.choice(len(tris), p=weights))
        u, v = rng.random(2)
        if u + v > 1.0:
            u, v = 1.0 - u, 1.0 - v
        p = tris[t, 0] + u * (tris[t, 1] - tris[t, 0]) + v * (tris[t, 2] - tris[t, 0])
        if p[2] >= zmin:
            n = np.cross(tris[t, 1] - tris[t, 0], tris[t, 2] - tris[t, 0])
            return p, n / np.linalg.norm(n)
    return p, n / np.linalg.norm(n)


def _sample_field(rng: np.random.Generator, obj: SegmentedObject, cfg: FieldConfig) -> DeformationField:
    kinds = sorted(cfg.kind_weights)
    probs = np.array([cfg.kind_weights[k] for k in kinds])
    kind = kinds[int(rng.choice(len(kinds), p=probs / probs.sum()))]
    if kind == "composite":
        children = tuple(_sample_push(rng, obj, cfg) for _ in range(2))
        return DeformationField("composite", {}, attachment=cfg.attachment, children=children)
    if kind == "gaussian-push":
        return _sample_push(rng, obj, cfg)
    lo, hi = obj.bounds()
    if kind == "bend":
        phi = rng.uniform(0.0, 2.0 * np.pi)
        return DeformationField(
            "bend",
            {
                "direction": [np.cos(phi), np.sin(phi), 0.0],
                "curvature": rng.uniform(*cfg.bend_curvature),
                "z0": cfg.attachment[0],
            },
            attachment=cfg.attachment,
        )
    return DeformationField(
        "twist",
        {
            "rate": rng.uniform(*cfg.twist_rate) * (1 if rng.random() < 0.5 else -1),
            "center_xy": [float((lo[0] + hi[0]) / 2), float((lo[1] + hi[1]) / 2)],
            "z0": cfg.attachment[0],
        },
        attachment=cfg.attachment,
    )


def _sample_push(rng: np.random.Generator, obj: SegmentedObject, cfg: FieldConfig) -> DeformationField:
    center, normal = _surface_point(rng, obj, cfg.interaction_zmin)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    if float(direction @ normal) > 0 and rng.random() < 0.8:
        direction = -direction  # mostly press into the surface
    return DeformationField(
        "gaussian-push",
        {
            "center": center,
            "direction": direction,
            "amplitude": rng.uniform(*cfg.amplitude),
            "rho": rng.uniform(*cfg.rho),
        },
        attachment=cfg.attachment,
    )


def jacobian_determinants(field: DeformationField, points: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """det(I + du/dx) by central differences at each point."""
    pts = np.atleast_2d(points)
    n = len(pts)
    jac = np.empty((n, 3, 3))
    for k in range(3):
        dp = np.zeros(3)
        dp[k] = h
        jac[:, :, k] = (field.displacement(pts + dp) - field.displacement(pts - dp)) / (2.0 * h)
    jac += np.eye(3)[None]
    return np.linalg.det(jac)


def field_is_admissible(field: DeformationField, obj: SegmentedObject, rng: np.random.Generator, n_probe: int = 160) -> bool:
    verts = obj.mesh(1).vertices
    idx = rng.choice(len(verts), size=min(n_probe, len(verts)), replace=False)
    lo, hi = JACOBIAN_DET_RANGE
    det = jacobian_determinants(field, verts[idx])
    return bool((det >= lo).all() and (det <= hi).all())


def random_admissible_field(obj: SegmentedObject, cfg: FieldConfig, rng: np.random.Generator, seed_note=None) -> DeformationField:
    """Rejection-sample a field meeting the Jacobian bound; error carries the seed."""
    for _ in range(REJECTION_ATTEMPTS):
        candidate = _sample_field(rng, obj, cfg)
        if field_is_admissible(candidate, obj, rng):
            return candidate
    raise DeformationRejectedError(
        f"no admissible field within {REJECTION_ATTEMPTS} attempts (seed {seed_note!r})"
    )


def deform(obj: SegmentedObject, field: DeformationField) -> SegmentedObject:
    """Displace every segment mesh by the field; ROIs must stay inside the body."""
    deformed = obj.deformed(field.displacement)
    body = deformed.mesh(1)
    for sid, mesh in deformed.segments[1:]:
        if not body.contains(mesh.vertices).all():
            raise DeformationRejectedError(f"segment {sid} escaped the body under {field.kind}")
    return deformed
