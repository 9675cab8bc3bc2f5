"""Two-stage dense inference, ROI centroid extraction, and puncture planning.

Stage 1 probes [-1.5,1.5]^3 in the normalized frame for occupied space; stage 2
samples the occupied bounding box enlarged by 20% per side. Centroids and
plans are expressed in world coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    NoSurfaceBandError,
    SegmentNotReconstructedError,
    TargetOnSurfaceError,
)
from .geometry.cloud import ObservationCloud
from .geometry.io import read_table, write_cloud_text
from .nn import softmax
from .util import rng_for

STAGE1_BOX = 1.5
BOX_ENLARGE = 0.2
MIN_OCCUPIED = 10
SURFACE_BAND_FACTOR = 1.5
DEFAULT_STANDOFF = 0.05


@dataclass
class DenseReconstruction:
    """Labeled dense output point cloud in both frames."""

    points_norm: np.ndarray | None
    points_world: np.ndarray
    labels: np.ndarray
    probs: np.ndarray
    sdists_norm: np.ndarray  # predicted signed distances, normalized units
    sdists_world: np.ndarray
    uncertainties: np.ndarray | None = None
    empty: bool = False
    meta: dict | None = None

    def __len__(self) -> int:
        return len(self.points_world)

    def with_uncertainties(self, h: np.ndarray) -> "DenseReconstruction":
        return DenseReconstruction(
            self.points_norm, self.points_world, self.labels, self.probs,
            self.sdists_norm, self.sdists_world, uncertainties=np.asarray(h),
            empty=self.empty, meta=self.meta,
        )


@dataclass(frozen=True)
class PuncturePlan:
    target: np.ndarray  # world coordinates
    entry: np.ndarray
    direction: np.ndarray  # unit vector entry -> target
    standoff: float

    def to_dict(self) -> dict:
        return {
            "target": [float(x) for x in self.target],
            "entry": [float(x) for x in self.entry],
            "direction": [float(x) for x in self.direction],
            "standoff": float(self.standoff),
        }


def _empty_recon(cloud: ObservationCloud, n_classes: int, meta: dict) -> DenseReconstruction:
    z3 = np.zeros((0, 3))
    return DenseReconstruction(
        points_norm=z3, points_world=z3, labels=np.zeros(0, dtype=np.int64),
        probs=np.zeros((0, n_classes + 1), dtype=np.float32),
        sdists_norm=np.zeros(0, dtype=np.float32), sdists_world=np.zeros(0),
        empty=True, meta=meta,
    )


def stage2_queries(model, cloud: ObservationCloud, n_coarse: int, n_dense: int, seed: int):
    """Coarse probe then dense query points; returns (queries, meta) or (None, meta)."""
    rng = rng_for(seed, "dense-infer")
    p_norm = cloud.normalized().astype(np.float32)
    latent = model.encode_cloud(p_norm)

    coarse_n = n_coarse
    for attempt in range(2):
        coarse = rng.uniform(-STAGE1_BOX, STAGE1_BOX, size=(coarse_n, 3))
        logits, _ = model.decode(latent, coarse)
        occupied = coarse[logits.argmax(axis=1) > 0]
        if len(occupied) >= MIN_OCCUPIED:
            break
        coarse_n = 4 * n_coarse  # one retry with a denser probe
    meta = {"n_coarse": coarse_n, "n_dense": n_dense, "seed": seed, "stage1_occupied": int(len(occupied))}
    if len(occupied) < MIN_OCCUPIED:
        return latent, None, meta
    lo = occupied.min(axis=0)
    hi = occupied.max(axis=0)
    span = hi - lo
    lo = lo - BOX_ENLARGE * span
    hi = hi + BOX_ENLARGE * span
    meta["stage2_box"] = [lo.tolist(), hi.tolist()]
    return latent, rng.uniform(lo, hi, size=(n_dense, 3)), meta


def dense_infer(model, cloud: ObservationCloud, n_dense: int = 40000, n_coarse: int = 10000,
                seed: int = 0) -> DenseReconstruction:
    """Reconstruct the full object as a labeled dense point cloud.

    An empty stage-1 probe yields a flagged empty reconstruction, not an error.
    """
    latent, queries, meta = stage2_queries(model, cloud, n_coarse, n_dense, seed)
    if queries is None:
        return _empty_recon(cloud, model.n_classes, meta)
    logits, sd = model.decode(latent, queries)
    probs = softmax(logits)
    sd_norm = sd.astype(np.float64)
    return DenseReconstruction(
        points_norm=queries,
        points_world=cloud.to_world(queries),
        labels=logits.argmax(axis=1).astype(np.int64),
        probs=probs,
        sdists_norm=sd,
        sdists_world=cloud.distance_to_world(sd_norm),
        meta=meta,
    )


def geometric_centroid(recon: DenseReconstruction, segment_id: int) -> np.ndarray:
    """Unweighted mean of world coordinates of points labeled segment_id."""
    mask = recon.labels == segment_id
    if not mask.any():
        raise SegmentNotReconstructedError(f"segment {segment_id} not present in reconstruction")
    return recon.points_world[mask].mean(axis=0)


def uwc_centroid(recon: DenseReconstruction, segment_id: int) -> np.ndarray:
    """Uncertainty-weighted centroid via the four-step normalization.

    u' = u / sum(u); c = 1 - u'; c' = c / sum(c); UWC = sum(c' * p).
    Falls back to the geometric centroid when all uncertainties are zero.
    """
    if recon.uncertainties is None:
        raise ValueError("reconstruction carries no uncertainties; run an uncertainty method first")
    mask = recon.labels == segment_id
    if mask.sum() < 2:
        raise SegmentNotReconstructedError(f"segment {segment_id} needs >= 2 points for UWC")
    u = np.asarray(recon.uncertainties, dtype=np.float64)[mask]
    total = u.sum()
    if total <= 0.0:
        return geometric_centroid(recon, segment_id)
    u_norm = u / total
    c = 1.0 - u_norm
    weights = c / c.sum()
    return weights @ recon.points_world[mask]


def surface_band_epsilon(recon: DenseReconstruction, sample_size: int = 2000) -> float:
    """1.5x the estimated mean nearest-neighbor spacing of the dense cloud."""
    pts = recon.points_world[:sample_size]
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=2)
    return SURFACE_BAND_FACTOR * float(dist[:, 1].mean())


def plan_puncture(recon: DenseReconstruction, target, standoff: float = DEFAULT_STANDOFF) -> PuncturePlan:
    """Entry point = reconstruction point nearest the target within the surface band.

    The band is |predicted signed distance| < eps restricted to outside-labeled
    points, a proxy for the outer body surface (ROI boundaries also have small
    |sd| but carry interior labels).
    """
    if recon.empty or len(recon) == 0:
        raise NoSurfaceBandError("empty reconstruction")
    target = np.asarray(target, dtype=np.float64)
    eps = surface_band_epsilon(recon)
    band = (recon.labels == 0) & (np.abs(recon.sdists_world) < eps)
    if not band.any():
        raise NoSurfaceBandError(f"no surface-band points (eps={eps:.4g})")
    candidates = recon.points_world[band]
    dist = np.linalg.norm(candidates - target, axis=1)
    entry = candidates[int(np.argmin(dist))]
    gap = float(np.linalg.norm(target - entry))
    if gap < eps:
        raise TargetOnSurfaceError(f"target within {eps:.4g} of the surface; trajectory degenerate")
    return PuncturePlan(target=target, entry=entry, direction=(target - entry) / gap, standoff=standoff)


# ---------------------------------------------------------------------------
# reconstruction file I/O: x y z label p0..pC sdist [H]


def save_reconstruction(path, recon: DenseReconstruction) -> None:
    cols = [recon.probs, recon.sdists_world[:, None]]
    if recon.uncertainties is not None:
        cols.append(np.asarray(recon.uncertainties)[:, None])
    extra = np.concatenate(cols, axis=1) if len(recon) else np.zeros((0, 1))
    header = "# x y z label p0..pC sdist" + (" H" if recon.uncertainties is not None else "")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        fh.write(f"# empty={int(recon.empty)}\n")
    with open(path, "a", encoding="utf-8") as fh:
        for i in range(len(recon)):
            p = recon.points_world[i]
            row = f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {int(recon.labels[i])}"
            row += " " + " ".join(f"{float(x)!r}" for x in extra[i])
            fh.write(row + "\n")


def load_reconstruction(path) -> DenseReconstruction:
    rows = read_table(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    has_h = header.endswith(" H")
    if rows.size == 0:
        return DenseReconstruction(
            points_norm=None, points_world=np.zeros((0, 3)), labels=np.zeros(0, dtype=np.int64),
            probs=np.zeros((0, 1)), sdists_norm=np.zeros(0), sdists_world=np.zeros(0),
            empty=True,
        )
    n_prob = rows.shape[1] - 5 - (1 if has_h else 0)
    return DenseReconstruction(
        points_norm=None,
        points_world=rows[:, :3],
        labels=rows[:, 3].astype(np.int64),
        probs=rows[:, 4 : 4 + n_prob],
        sdists_norm=np.full(len(rows), np.nan),
        sdists_world=rows[:, 4 + n_prob],
        uncertainties=rows[:, 5 + n_prob] if has_h else None,
    )
