"""Per-point and global uncertainty estimation plus masking-based explainability."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import McdRequiresDropoutError
from .geometry.cloud import ObservationCloud
from .nn import softmax
from .util import rng_for

ENTROPY_EPS = 1e-12
DEFAULT_MC_SAMPLES = 30
EXPLAIN_QUERY_BOX = 1.5
EXPLAIN_RADIUS_FRACTION = 0.2


def entropy_of_probs(probs: np.ndarray) -> np.ndarray:
    """H(p) = -sum_j p_j log(p_j + eps), rowwise, accumulated in float64."""
    p = np.asarray(probs, dtype=np.float64)
    return -(p * np.log(p + ENTROPY_EPS)).sum(axis=1)


def activation_entropy(model, cloud_norm: np.ndarray, queries_norm: np.ndarray) -> np.ndarray:
    """Predictive entropy of a single deterministic forward pass."""
    logits, _ = model.predict(cloud_norm, queries_norm, mode="eval")
    return entropy_of_probs(softmax(logits))


def mcd_probs(model, cloud_norm: np.ndarray, queries_norm: np.ndarray, m: int = DEFAULT_MC_SAMPLES,
              seed: int = 0, member_seeds=None) -> np.ndarray:
    """Mean softmax over m dropout-sampled forward passes (the virtual ensemble)."""
    if model.dropout_rate <= 0.0:
        raise McdRequiresDropoutError("mcd requires a model with nonzero dropout")
    latent = model.encode_cloud(np.asarray(cloud_norm, dtype=np.float32))
    if member_seeds is None:
        member_seeds = [(seed, i) for i in range(m)]
    elif len(member_seeds) != m:
        raise ValueError(f"need {m} member seeds, got {len(member_seeds)}")
    acc = None
    for i in range(m):
        key = member_seeds[i]
        rng = rng_for(*key) if isinstance(key, tuple) else rng_for(key)
        logits, _ = model.decode(latent, queries_norm, mode="mc", rng=rng)
        p = softmax(logits).astype(np.float64)
        acc = p if acc is None else acc + p
    return acc / m


def mcd_entropy(model, cloud_norm: np.ndarray, queries_norm: np.ndarray, m: int = DEFAULT_MC_SAMPLES,
                seed: int = 0, member_seeds=None) -> np.ndarray:
    """Entropy of the ensemble-averaged class distribution."""
    return entropy_of_probs(mcd_probs(model, cloud_norm, queries_norm, m=m, seed=seed, member_seeds=member_seeds))


def global_uncertainty(entropies) -> float:
    """Mean per-point entropy; exactly permutation-invariant (fsum)."""
    values = np.asarray(entropies, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("global uncertainty needs at least one entropy value")
    return math.fsum(values.tolist()) / values.size


@dataclass
class ExplainabilityMap:
    """Per-input-point similarity h(S_max, S_i) in [0, 1]; low = important."""

    scores: np.ndarray
    radius: float
    flags: np.ndarray  # True where the masked cloud fell below the encoder minimum
    meta: dict


def explain(model, cloud: ObservationCloud, radius: float | None = None,
            radius_fraction: float = EXPLAIN_RADIUS_FRACTION, n_queries: int = 40000,
            seed: int = 0, stride: int = 1) -> ExplainabilityMap:
    """Masking-based importance: remove the patch around each input point and
    measure the fraction of shared query points whose label is unchanged.

    One masked cloud per input point; all masks share the same query set. The
    default radius is radius_fraction of the longest side of the cloud's
    bounding box. stride > 1 evaluates every stride-th point and fills the
    rest from the nearest evaluated point.
    """
    from .occnet.model import MIN_CLOUD_POINTS

    points = cloud.points
    n = len(points)
    if n < 2:
        raise ValueError("explainability needs at least 2 input points")
    if radius is None:
        extent = points.max(axis=0) - points.min(axis=0)
        radius = radius_fraction * float(extent.max())

    rng = rng_for(seed, "explain-queries")
    queries = rng.uniform(-EXPLAIN_QUERY_BOX, EXPLAIN_QUERY_BOX, size=(n_queries, 3))
    p_norm = cloud.normalized().astype(np.float32)
    base_logits, _ = model.predict(p_norm, queries, mode="eval")
    base_labels = base_logits.argmax(axis=1)

    tree = cKDTree(points)
    scores = np.full(n, np.nan)
    flags = np.zeros(n, dtype=bool)
    evaluated = list(range(0, n, max(1, stride)))
    for i in evaluated:
        # the neighborhood is strict (< radius): a zero radius removes nothing
        patch = tree.query_ball_point(points[i], r=radius) if radius > 0 else []
        patch = [j for j in patch if np.linalg.norm(points[j] - points[i]) < radius]
        if len(patch) == 0:
            scores[i] = 1.0  # empty patch: masked cloud identical to the baseline
            continue
        mask = np.ones(n, dtype=bool)
        mask[patch] = False
        kept = int(mask.sum())
        if kept < MIN_CLOUD_POINTS:
            scores[i] = 0.0
            flags[i] = True
            continue
        # same normalization as the baseline: masking must not move the frame
        masked_norm = p_norm[mask]
        logits, _ = model.predict(masked_norm, queries, mode="eval")
        scores[i] = float((logits.argmax(axis=1) == base_labels).mean())

    if stride > 1:
        done = np.array(evaluated)
        filled = cKDTree(points[done]).query(points, k=1)[1]
        scores = scores[done][filled]
        flags = flags[done][filled]

    return ExplainabilityMap(
        scores=scores,
        radius=float(radius),
        flags=flags,
        meta={"n_queries": n_queries, "seed": seed, "stride": stride, "n_points": n},
    )
