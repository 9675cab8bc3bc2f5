"""Inside-outside sort sampling of ground-truth occupancy points.

Per segment: draw uniform points in the segment's bounding box extended by
20% per side until at least t fall inside and t outside that segment, sort
each set by unsigned distance to the segment surface, keep the k closest of
each. The concatenation over segments (2*k*C points) is labelled with the
global occupancy label and global signed distance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SamplingBudgetError
from ..geometry.mesh import SegmentedObject

BBOX_EXTENSION = 0.2
SAMPLE_BUDGET = 10_000_000


@dataclass(frozen=True)
class IssResult:
    """World-space ground-truth samples.

    `points` is laid out in per-segment blocks of 2k: for segment index j
    (0-based), rows [2kj, 2kj+k) are the kept inside set and [2kj+k, 2kj+2k)
    the kept outside set, each sorted by distance to that segment's surface.
    `candidates`, when requested, maps segment id to the full (inside,
    outside) candidate pools the kept sets were drawn from.
    """

    points: np.ndarray
    labels: np.ndarray
    sdists: np.ndarray
    per_segment_counts: dict
    candidates: dict | None = None


def iss_sample(obj: SegmentedObject, t: int, k: int, rng: np.random.Generator,
               with_candidates: bool = False) -> IssResult:
    if k > t:
        raise ValueError(f"k ({k}) must not exceed t ({t})")
    kept = []
    counts = {}
    pools = {} if with_candidates else None
    for sid, mesh in obj.segments:
        lo, hi = mesh.bounds()
        span = hi - lo
        lo = lo - BBOX_EXTENSION * span
        hi = hi + BBOX_EXTENSION * span
        inside_pts = []
        outside_pts = []
        n_inside = 0
        n_outside = 0
        drawn = 0
        batch = max(2048, 4 * t)
        while n_inside < t or n_outside < t:
            if drawn >= SAMPLE_BUDGET:
                raise SamplingBudgetError(
                    f"segment {sid}: {n_inside} inside / {n_outside} outside after {drawn} draws"
                )
            pts = rng.uniform(lo, hi, size=(batch, 3))
            drawn += batch
            inside = mesh.contains(pts)
            inside_pts.append(pts[inside])
            outside_pts.append(pts[~inside])
            n_inside += int(inside.sum())
            n_outside += int(len(pts) - inside.sum())
        inside_pts = np.concatenate(inside_pts)
        outside_pts = np.concatenate(outside_pts)
        kept.append(_closest_k(mesh, inside_pts, k))
        kept.append(_closest_k(mesh, outside_pts, k))
        counts[sid] = {"inside_candidates": len(inside_pts), "outside_candidates": len(outside_pts)}
        if pools is not None:
            pools[sid] = (inside_pts, outside_pts)
    points = np.concatenate(kept)
    labels = obj.occupancy_label(points)
    sdists = obj.signed_distance(points)
    return IssResult(points=points, labels=labels, sdists=sdists, per_segment_counts=counts,
                     candidates=pools)


def _closest_k(mesh, candidates: np.ndarray, k: int) -> np.ndarray:
    dist = mesh.distance(candidates)
    order = np.argsort(dist, kind="stable")
    return candidates[order[:k]]
