"""Brute-force reference implementations for mesh queries.

These are the correctness oracles for the BVH kernels: fully vectorized numpy,
no spatial acceleration, computing point-triangle distance with the
barycentric-clamp formulation (a different derivation than the kernel's
region walk) and inside tests with a fixed-direction crossing count.
"""
from __future__ import annotations

import numpy as np


def brute_distance(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Min distance from each of n points to m triangles, O(n*m) memory-chunked."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.empty(len(pts))
    chunk = max(1, int(4e6) // max(1, len(triangles)))
    for s in range(0, len(pts), chunk):
        out[s : s + chunk] = _dist_block(pts[s : s + chunk], triangles).min(axis=1)
    return out


def _dist_block(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """(n, m) distances via projection onto the plane and barycentric clamping."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab = b - a
    ac = c - a
    n = len(p)
    m = len(tri)
    ap = p[:, None, :] - a[None, :, :]  # (n, m, 3)

    d00 = np.einsum("mk,mk->m", ab, ab)
    d01 = np.einsum("mk,mk->m", ab, ac)
    d11 = np.einsum("mk,mk->m", ac, ac)
    d20 = np.einsum("nmk,mk->nm", ap, ab)
    d21 = np.einsum("nmk,mk->nm", ap, ac)
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom

    # clamp the barycentric solution to the triangle, edge by edge
    v_c = np.clip(v, 0.0, 1.0)
    w_c = np.clip(w, 0.0, 1.0)
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)

    def seg_param(t):
        return np.clip(t, 0.0, 1.0)

    # candidate closest points: interior projection and the three edges
    t_ab = seg_param(d20 / d00)
    t_ac = seg_param(d21 / d11)
    bp20 = np.einsum("nmk,mk->nm", p[:, None, :] - b[None, :, :], c - b)
    bc_len = np.einsum("mk,mk->m", c - b, c - b)
    t_bc = seg_param(bp20 / bc_len)

    cand = np.empty((4, n, m))
    proj = v[..., None] * ab[None] + w[..., None] * ac[None]
    cand[0] = np.linalg.norm(ap - proj, axis=2)
    cand[0][~inside] = np.inf
    cand[1] = np.linalg.norm(ap - t_ab[..., None] * ab[None], axis=2)
    cand[2] = np.linalg.norm(ap - t_ac[..., None] * ac[None], axis=2)
    cand[3] = np.linalg.norm(p[:, None, :] - (b[None] + t_bc[..., None] * (c - b)[None]), axis=2)
    return cand.min(axis=0)


def brute_contains(points: np.ndarray, triangles: np.ndarray, direction=(0.3189234, 0.7428191, 0.5886124)) -> np.ndarray:
    """Parity inside test with one fixed ray direction for all points."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    e1 = b - a
    e2 = c - a
    pvec = np.cross(d, e2)  # (m, 3)
    det = np.einsum("mk,mk->m", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    crossings = np.zeros(len(pts), dtype=np.int64)
    chunk = max(1, int(4e6) // max(1, len(triangles)))
    for s in range(0, len(pts), chunk):
        p = pts[s : s + chunk]
        tvec = p[:, None, :] - a[None]
        u = np.einsum("nmk,mk->nm", tvec, pvec) * inv[None]
        qvec = np.cross(tvec, e1[None])
        v = np.einsum("nmk,k->nm", qvec, d) * inv[None]
        t = np.einsum("nmk,mk->nm", qvec, e2) * inv[None]
        hit = ok[None] & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
        crossings[s : s + chunk] = hit.sum(axis=1)
    return crossings % 2 == 1


def brute_signed_distance(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    d = brute_distance(points, triangles)
    return np.where(brute_contains(points, triangles), -d, d)
