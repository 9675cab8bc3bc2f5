"""Built-in synthetic phantoms: a lumpy blob, a cylinder, and a slab, each
with three embedded 17 mm spherical ROIs and a rigid attachment at the base.

Dimensions are meters. Procedural meshes are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry.mesh import SegmentedObject, TriangleMesh

ROI_DIAMETER = 0.017

PHANTOM_NAMES = ("sphere-phantom", "cylinder-phantom", "slab-phantom")


@dataclass(frozen=True)
class PhantomSpec:
    """Deformation-related metadata for a built-in phantom."""

    name: str
    attachment: tuple[float, float]  # displacement blends from 0 to 1 over this z-range
    interaction_zmin: float  # interaction centers are drawn above this height
    roi_centers: tuple = ()
    roi_diameter: float = ROI_DIAMETER


# ---------------------------------------------------------------------------
# primitive meshes


def icosphere(radius: float = 1.0, center=(0.0, 0.0, 0.0), subdivisions: int = 3) -> TriangleMesh:
    """Geodesic sphere from a subdivided icosahedron."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return TriangleMesh(verts * radius + np.asarray(center, dtype=np.float64), faces, validate=False)


def _subdivide(verts: np.ndarray, faces: np.ndarray):
    edge_mid: dict = {}
    verts = list(verts)

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in edge_mid:
            edge_mid[key] = len(verts)
            verts.append((np.asarray(verts[a]) + np.asarray(verts[b])) / 2.0)
        return edge_mid[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts, dtype=np.float64), np.array(new_faces, dtype=np.int64)


def cylinder_mesh(radius: float, height: float, z0: float = 0.0, n_radial: int = 42, n_layers: int = 10) -> TriangleMesh:
    theta = np.linspace(0.0, 2.0 * np.pi, n_radial, endpoint=False)
    ring = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    verts = []
    for i in range(n_layers + 1):
        z = z0 + height * i / n_layers
        verts += [[x, y, z] for x, y in ring]
    bottom_center = len(verts)
    verts.append([0.0, 0.0, z0])
    top_center = len(verts)
    verts.append([0.0, 0.0, z0 + height])

    faces = []
    for i in range(n_layers):
        for j in range(n_radial):
            a = i * n_radial + j
            b = i * n_radial + (j + 1) % n_radial
            c = (i + 1) * n_radial + (j + 1) % n_radial
            d = (i + 1) * n_radial + j
            faces += [[a, b, c], [a, c, d]]
    for j in range(n_radial):
        jn = (j + 1) % n_radial
        faces.append([bottom_center, jn, j])  # bottom cap, normal -z
        faces.append([top_center, n_layers * n_radial + j, n_layers * n_radial + jn])
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64), validate=False)


def box_mesh(size, center=(0.0, 0.0, 0.0), resolution: float = 0.008) -> TriangleMesh:
    """Axis-aligned box surface gridded at roughly `resolution`, welded watertight."""
    size = np.asarray(size, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    n = np.maximum(1, np.round(size / resolution).astype(int))
    verts = []
    faces = []

    def add_face(axis, sign):
        u_axis, v_axis = [(1, 2), (2, 0), (0, 1)][axis]
        nu, nv = n[u_axis], n[v_axis]
        us = np.linspace(-size[u_axis] / 2, size[u_axis] / 2, nu + 1)
        vs = np.linspace(-size[v_axis] / 2, size[v_axis] / 2, nv + 1)
        base = len(verts)
        for v in vs:
            for u in us:
                p = np.zeros(3)
                p[axis] = sign * size[axis] / 2
                p[u_axis] = u
                p[v_axis] = v
                verts.append(p)
        for iv in range(nv):
            for iu in range(nu):
                a = base + iv * (nu + 1) + iu
                b = a + 1
                c = a + nu + 2
                d = a + nu + 1
                if sign > 0:
                    faces.extend([[a, b, c], [a, c, d]])
                else:
                    faces.extend([[a, c, b], [a, d, c]])

    for axis in range(3):
        add_face(axis, +1)
        add_face(axis, -1)
    verts = np.array(verts, dtype=np.float64) + center
    faces = np.array(faces, dtype=np.int64)
    # weld duplicated edge/corner vertices
    key = np.round(verts, 12)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    verts = verts[first]
    remap = np.empty(len(inverse), dtype=np.int64)
    remap[:] = inverse
    faces = remap[faces]
    return TriangleMesh(verts, faces, validate=False)


# ---------------------------------------------------------------------------
# phantom assembly


def _roi(center) -> TriangleMesh:
    return icosphere(ROI_DIAMETER / 2.0, center, subdivisions=2)


def _lumpy_body() -> TriangleMesh:
    r0 = 0.05
    center = np.array([0.0, 0.0, 0.046])
    sphere = icosphere(1.0, (0, 0, 0), subdivisions=3)
    dirs = sphere.vertices
    # fixed bumps in the upper hemisphere; the middle one marks the central ROI
    bumps = [
        (np.array([0.2, 0.3, 0.93]), 0.22, 0.5),
        (np.array([-0.75, 0.4, 0.53]), 0.16, 0.45),
        (np.array([0.6, -0.65, 0.47]), 0.12, 0.4),
    ]
    radial = np.full(len(dirs), 1.0)
    for b_dir, amp, width in bumps:
        b_dir = b_dir / np.linalg.norm(b_dir)
        d2 = np.sum((dirs - b_dir) ** 2, axis=1)
        radial += amp * np.exp(-d2 / (2.0 * width**2))
    verts = dirs * (r0 * radial[:, None]) + center
    verts[:, 2] = np.maximum(verts[:, 2], 0.0)  # flatten the base for attachment
    return TriangleMesh(verts, sphere.faces, validate=False)


def make_phantom(name: str) -> tuple[SegmentedObject, PhantomSpec]:
    if name == "cylinder-phantom":
        body = cylinder_mesh(0.04, 0.12)
        roi_centers = ((0.015, 0.0, 0.03), (-0.012, 0.008, 0.06), (0.01, -0.012, 0.09))
        spec = PhantomSpec(name, attachment=(0.0, 0.02), interaction_zmin=0.04, roi_centers=roi_centers)
    elif name == "slab-phantom":
        body = box_mesh((0.14, 0.10, 0.04), center=(0.0, 0.0, 0.02))
        roi_centers = ((-0.045, 0.0, 0.02), (0.0, 0.015, 0.02), (0.045, -0.015, 0.02))
        spec = PhantomSpec(name, attachment=(0.0, 0.012), interaction_zmin=0.016, roi_centers=roi_centers)
    elif name == "sphere-phantom":
        body = _lumpy_body()
        roi_centers = ((0.018, 0.0, 0.042), (-0.013, 0.009, 0.066), (0.0, -0.016, 0.048))
        spec = PhantomSpec(name, attachment=(0.0, 0.016), interaction_zmin=0.035, roi_centers=roi_centers)
    else:
        raise KeyError(f"unknown phantom {name!r}; choose from {PHANTOM_NAMES}")
    segments = [(1, body)] + [(i + 2, _roi(c)) for i, c in enumerate(roi_centers)]
    obj = SegmentedObject(segments, name=name)
    return obj, spec
