"""Watertight triangle meshes and multi-segment objects with occupancy and
signed-distance queries.

All geometry is double precision. Query acceleration uses a per-mesh BVH whose
results must agree exactly with the brute-force reference in
:mod:`defrec.geometry.reference`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import MeshValidationError, ObjectValidationError
from . import kernels

_DEGENERATE_AREA = 1e-12


class TriangleMesh:
    """Immutable triangle mesh with lazy BVH acceleration.

    vertices: (n, 3) float64 in meters. faces: (m, 3) int indices, CCW outward.
    """

    def __init__(self, vertices: np.ndarray, faces: np.ndarray, validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshValidationError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshValidationError(f"faces must be (m, 3), got {self.faces.shape}")
        self.triangles = np.ascontiguousarray(self.vertices[self.faces])
        self._bvh = None
        if validate:
            self.validate()

    # -- validation ---------------------------------------------------------

    def validate(self, check_self_intersection: bool = True) -> None:
        if not np.isfinite(self.vertices).all():
            raise MeshValidationError("non-finite vertex coordinates")
        if self.faces.min(initial=0) < 0 or self.faces.max(initial=-1) >= len(self.vertices):
            raise MeshValidationError("face index out of range")
        areas = self.face_areas()
        if (areas < _DEGENERATE_AREA).any():
            bad = int(np.argmin(areas))
            raise MeshValidationError(f"degenerate triangle {bad} (area {areas[bad]:.3e})")
        self._check_watertight()
        if check_self_intersection:
            eps = 1e-9 * float(np.linalg.norm(self.extent()))
            bad = kernels.self_intersections(self.triangles, self.faces, *self._bvh_arrays(), eps)
            if bad:
                raise MeshValidationError(f"{bad} self-intersecting triangle pair(s)")

    def _check_watertight(self) -> None:
        f = self.faces
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        _, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        if (counts != 2).any():
            raise MeshValidationError("mesh is not watertight (edge not shared by exactly 2 faces)")
        # each undirected edge must appear once in each direction
        flipped = (directed[:, 0] > directed[:, 1]).astype(np.int64)
        per_edge = np.zeros(len(counts), dtype=np.int64)
        np.add.at(per_edge, inverse, flipped)
        if (per_edge != 1).any():
            raise MeshValidationError("inconsistent face winding (edge traversed twice in one direction)")

    # -- basic measures -----------------------------------------------------

    def face_areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extent(self) -> np.ndarray:
        lo, hi = self.bounds()
        return hi - lo

    def volume(self) -> float:
        """Signed volume via the divergence theorem (positive for outward winding)."""
        t = self.triangles
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def volume_centroid(self) -> np.ndarray:
        """Centroid of the enclosed volume (exact, from the triangulation)."""
        t = self.triangles
        det = np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2]))
        c = t.sum(axis=1) / 4.0  # tetra centroid with the origin as 4th vertex
        vol = det.sum() / 6.0
        return (det[:, None] * c).sum(axis=0) / 6.0 / vol

    # -- queries ------------------------------------------------------------

    def _bvh_arrays(self):
        if self._bvh is None:
            self._bvh = kernels.build_bvh(self.triangles)
        return self._bvh

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from each point to the mesh surface."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return kernels.bvh_distance(np.ascontiguousarray(pts), self.triangles, *self._bvh_arrays())

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict inside test by ray-casting parity (deterministic jittered rays)."""
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
        seeds = kernels.point_hashes(pts)
        return kernels.bvh_contains(pts, seeds, self.triangles, *self._bvh_arrays())

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the surface, negative inside."""
        d = self.distance(points)
        inside = self.contains(points)
        return np.where(inside, -d, d)

    def displaced(self, displacement: np.ndarray) -> "TriangleMesh":
        """New mesh with vertices moved by the given (n, 3) displacement."""
        return TriangleMesh(self.vertices + displacement, self.faces, validate=False)


@dataclass
class SegmentedObject:
    """Body segment (id 1) plus internal ROI segments (ids 2..C).

    Segment 0 is the implicit outside. ROI meshes must lie strictly inside the
    body mesh; nesting depth is precomputed so labels resolve to the innermost
    containing segment.
    """

    segments: list[tuple[int, TriangleMesh]]
    name: str = "object"
    _depth: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        ids = [sid for sid, _ in self.segments]
        if ids != list(range(1, len(ids) + 1)):
            raise ObjectValidationError(f"segment ids must be consecutive 1..C, got {ids}")

    @property
    def depths(self) -> dict:
        """Nesting depth per segment id (body 0, ROIs inside it 1, ...)."""
        if self._depth is None:
            depth = {}
            for sid, mesh in self.segments:
                depth[sid] = 0
                for other_id, other in self.segments:
                    if other_id != sid and bool(other.contains(mesh.vertices[:1])[0]):
                        depth[sid] += 1
            self._depth = depth
        return self._depth

    def validate(self) -> None:
        """Check ROI nesting: every non-body segment strictly inside the body."""
        body = self.mesh(1)
        for sid, mesh in self.segments[1:]:
            sd = body.signed_distance(mesh.vertices)
            if (sd >= 0).any():
                raise ObjectValidationError(f"segment {sid} is not strictly inside the body")
        for i, (sid_a, mesh_a) in enumerate(self.segments[1:], start=1):
            for sid_b, mesh_b in self.segments[i + 1:]:
                if mesh_a.contains(mesh_b.vertices).any() or mesh_b.contains(mesh_a.vertices).any():
                    raise ObjectValidationError(f"segments {sid_a} and {sid_b} overlap")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def mesh(self, segment_id: int) -> TriangleMesh:
        for sid, mesh in self.segments:
            if sid == segment_id:
                return mesh
        raise KeyError(f"no segment {segment_id}")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = zip(*(m.bounds() for _, m in self.segments))
        return np.min(los, axis=0), np.max(his, axis=0)

    def occupancy_label(self, points: np.ndarray) -> np.ndarray:
        """Innermost containing segment id per point; 0 outside all."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        labels = np.zeros(len(pts), dtype=np.int64)
        best_depth = np.full(len(pts), -1, dtype=np.int64)
        depths = self.depths
        for sid, mesh in self.segments:
            inside = mesh.contains(pts)
            take = inside & (depths[sid] > best_depth)
            labels[take] = sid
            best_depth[take] = depths[sid]
        return labels

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the nearest surface of any segment, negative inside any segment."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        dist = np.full(len(pts), np.inf)
        for _, mesh in self.segments:
            dist = np.minimum(dist, mesh.distance(pts))
        inside = self.occupancy_label(pts) > 0
        return np.where(inside, -dist, dist)

    def deformed(self, displacement_fn) -> "SegmentedObject":
        """Apply one displacement field to every segment mesh.

        Nesting depths carry over: a smooth field cannot change containment
        order (the caller re-checks strict ROI containment separately).
        """
        segs = [(sid, mesh.displaced(displacement_fn(mesh.vertices))) for sid, mesh in self.segments]
        return SegmentedObject(segs, name=self.name, _depth=self.depths)


def signed_distance(obj: SegmentedObject, points: np.ndarray) -> np.ndarray:
    return obj.signed_distance(points)


def occupancy_label(obj: SegmentedObject, points: np.ndarray) -> np.ndarray:
    return obj.occupancy_label(points)
