"""File formats: OBJ subset (v/f, triangles only), segment manifests, and
whitespace point-cloud text files `x y z [label] [sdf]`.

Floats are written with shortest round-trip repr, so identical data produces
byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import MeshValidationError
from .mesh import SegmentedObject, TriangleMesh


def load_obj(path) -> TriangleMesh:
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshValidationError(f"{path}:{line_no}: malformed vertex line")
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshValidationError(f"{path}:{line_no}: only triangular faces are supported")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not vertices or not faces:
        raise MeshValidationError(f"{path}: no geometry found")
    return TriangleMesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64))


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_object(manifest_path) -> SegmentedObject:
    """Load a segmented object from a manifest listing one OBJ per segment."""
    manifest_path = Path(manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    segments = []
    for entry in sorted(manifest["segments"], key=lambda e: e["id"]):
        mesh = load_obj(manifest_path.parent / entry["file"])
        segments.append((int(entry["id"]), mesh))
    obj = SegmentedObject(segments, name=manifest.get("name", manifest_path.parent.name))
    obj.validate()
    return obj


def save_object(obj: SegmentedObject, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid, mesh in obj.segments:
        fname = f"segment_{sid}.obj"
        save_obj(mesh, out_dir / fname)
        entries.append({"id": sid, "file": fname})
    manifest = {"name": obj.name, "segments": entries}
    path = out_dir / "object.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_cloud_text(path, points: np.ndarray, labels=None, sdists=None, extra=None) -> None:
    """Write `x y z [label] [sdf] [extra...]` rows; comment lines start with '#'."""
    points = np.atleast_2d(points)
    with open(path, "w", encoding="utf-8") as fh:
        for i, p in enumerate(points):
            row = f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}"
            if labels is not None:
                row += f" {int(labels[i])}"
            if sdists is not None:
                row += f" {float(sdists[i])!r}"
            if extra is not None:
                row += " " + " ".join(f"{float(x)!r}" for x in extra[i])
            fh.write(row + "\n")


def read_cloud_text(path):
    """Read a point-cloud text file; returns (points, labels|None, sdists|None).

    Columns beyond the fifth are ignored here; use read_table for full rows.
    """
    rows = read_table(path)
    if rows.size == 0:
        return np.zeros((0, 3)), None, None
    points = rows[:, :3]
    labels = rows[:, 3].astype(np.int64) if rows.shape[1] >= 4 else None
    sdists = rows[:, 4] if rows.shape[1] >= 5 else None
    return points, labels, sdists


def read_table(path) -> np.ndarray:
    """Whitespace table reader skipping '#' comments; always 2-D float64."""
    data = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            data.append([float(x) for x in line.split()])
    if not data:
        return np.zeros((0, 0))
    return np.array(data, dtype=np.float64)
