"""Numba kernels for triangle-mesh queries: BVH build, closest-point distance,
ray-parity inside tests, triangle-triangle overlap, and a depth rasterizer.

All kernels are deterministic: traversal order is fixed by the BVH layout and
ray directions are derived from the query point's bit pattern, never from call
order.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

LEAF_SIZE = 4

# ambiguity margins for ray-parity tests
_RAY_EPS_T = 1e-12
_RAY_EPS_DET = 1e-14
_RAY_EPS_BARY = 1e-10


def build_bvh(triangles: np.ndarray):
    """Build a flattened median-split BVH over triangles of shape (m, 3, 3).

    Returns (bounds_lo, bounds_hi, left_child, leaf_start, leaf_count, order):
    internal nodes have left_child >= 0 (right child is left_child + 1),
    leaves have left_child == -1 and reference order[start:start+count].
    """
    m = triangles.shape[0]
    tri_lo = triangles.min(axis=1)
    tri_hi = triangles.max(axis=1)
    centroids = triangles.mean(axis=1)

    order = np.arange(m, dtype=np.int64)
    max_nodes = 2 * m
    bounds_lo = np.empty((max_nodes, 3), dtype=np.float64)
    bounds_hi = np.empty((max_nodes, 3), dtype=np.float64)
    left_child = np.full(max_nodes, -1, dtype=np.int64)
    leaf_start = np.zeros(max_nodes, dtype=np.int64)
    leaf_count = np.zeros(max_nodes, dtype=np.int64)

    n_nodes = 1
    stack = [(0, 0, m)]  # (node index, range start, range end)
    while stack:
        node, lo, hi = stack.pop()
        idx = order[lo:hi]
        bounds_lo[node] = tri_lo[idx].min(axis=0)
        bounds_hi[node] = tri_hi[idx].max(axis=0)
        count = hi - lo
        if count <= LEAF_SIZE:
            leaf_start[node] = lo
            leaf_count[node] = count
            continue
        cent = centroids[idx]
        axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
        mid = count // 2
        part = np.argpartition(cent[:, axis], mid)
        order[lo:hi] = idx[part]
        child = n_nodes
        n_nodes += 2
        left_child[node] = child
        stack.append((child, lo, lo + mid))
        stack.append((child + 1, lo + mid, hi))

    return (
        np.ascontiguousarray(bounds_lo[:n_nodes]),
        np.ascontiguousarray(bounds_hi[:n_nodes]),
        left_child[:n_nodes].copy(),
        leaf_start[:n_nodes].copy(),
        leaf_count[:n_nodes].copy(),
        order,
    )


@njit(cache=True, inline="always")
def _box_dist_sq(lo, hi, p):
    d = 0.0
    for k in range(3):
        if p[k] < lo[k]:
            t = lo[k] - p[k]
            d += t * t
        elif p[k] > hi[k]:
            t = p[k] - hi[k]
            d += t * t
    return d


@njit(cache=True, inline="always")
def _tri_dist_sq(a, b, c, p):
    # Closest point on triangle, region-by-region (Ericson, RTCD ch. 5).
    abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    acx, acy, acz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    apx, apy, apz = p[0] - a[0], p[1] - a[1], p[2] - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz
    bpx, bpy, bpz = p[0] - b[0], p[1] - b[1], p[2] - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx, qy, qz = apx - v * abx, apy - v * aby, apz - v * abz
        return qx * qx + qy * qy + qz * qz
    cpx, cpy, cpz = p[0] - c[0], p[1] - c[1], p[2] - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx, qy, qz = apx - w * acx, apy - w * acy, apz - w * acz
        return qx * qx + qy * qy + qz * qz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bpx - w * (c[0] - b[0])
        qy = bpy - w * (c[1] - b[1])
        qz = bpz - w * (c[2] - b[2])
        return qx * qx + qy * qy + qz * qz
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = apx - v * abx - w * acx
    qy = apy - v * aby - w * acy
    qz = apz - v * abz - w * acz
    return qx * qx + qy * qy + qz * qz


@njit(cache=True, parallel=True)
def bvh_distance(points, tris, bounds_lo, bounds_hi, left_child, leaf_start, leaf_count, order):
    """Unsigned distance from each point to the closest triangle."""
    n = points.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        p = points[i]
        best = np.inf
        stack = np.empty(64, dtype=np.int64)
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist_sq(bounds_lo[node], bounds_hi[node], p) >= best:
                continue
            lc = left_child[node]
            if lc < 0:
                s = leaf_start[node]
                for j in range(leaf_count[node]):
                    t = order[s + j]
                    d = _tri_dist_sq(tris[t, 0], tris[t, 1], tris[t, 2], p)
                    if d < best:
                        best = d
            else:
                # visit nearer child last so it is popped first
                dl = _box_dist_sq(bounds_lo[lc], bounds_hi[lc], p)
                dr = _box_dist_sq(bounds_lo[lc + 1], bounds_hi[lc + 1], p)
                if dl < dr:
                    stack[top] = lc + 1
                    stack[top + 1] = lc
                else:
                    stack[top] = lc
                    stack[top + 1] = lc + 1
                top += 2
        out[i] = np.sqrt(best)
    return out


@njit(cache=True, inline="always")
def _splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = x
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _hash_direction(seed, attempt):
    h1 = _splitmix64(seed + np.uint64(attempt) * np.uint64(0x9E3779B97F4A7C15))
    h2 = _splitmix64(h1)
    u = float(h1 >> np.uint64(11)) / 9007199254740992.0
    v = float(h2 >> np.uint64(11)) / 9007199254740992.0
    z = 2.0 * u - 1.0
    r = np.sqrt(max(0.0, 1.0 - z * z))
    phi = 2.0 * np.pi * v
    return r * np.cos(phi), r * np.sin(phi), z


@njit(cache=True, inline="always")
def _ray_parity(p, dx, dy, dz, tris, bounds_lo, bounds_hi, left_child, leaf_start, leaf_count, order):
    """Count ray-triangle crossings; returns (crossings, ambiguous)."""
    crossings = 0
    ambiguous = False
    inv = np.empty(3, dtype=np.float64)
    d = np.empty(3, dtype=np.float64)
    d[0], d[1], d[2] = dx, dy, dz
    for k in range(3):
        inv[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
    stack = np.empty(64, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        # slab test for ray vs AABB, origin p, direction d, t in [0, inf)
        tmin = 0.0
        tmax = np.inf
        hit = True
        for k in range(3):
            t1 = (bounds_lo[node][k] - p[k]) * inv[k]
            t2 = (bounds_hi[node][k] - p[k]) * inv[k]
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                hit = False
                break
        if not hit:
            continue
        lc = left_child[node]
        if lc >= 0:
            stack[top] = lc
            stack[top + 1] = lc + 1
            top += 2
            continue
        s = leaf_start[node]
        for j in range(leaf_count[node]):
            t = order[s + j]
            a = tris[t, 0]
            b = tris[t, 1]
            c = tris[t, 2]
            e1x, e1y, e1z = b[0] - a[0], b[1] - a[1], b[2] - a[2]
            e2x, e2y, e2z = c[0] - a[0], c[1] - a[1], c[2] - a[2]
            px = d[1] * e2z - d[2] * e2y
            py = d[2] * e2x - d[0] * e2z
            pz = d[0] * e2y - d[1] * e2x
            det = e1x * px + e1y * py + e1z * pz
            scale = np.abs(e1x) + np.abs(e1y) + np.abs(e1z) + np.abs(e2x) + np.abs(e2y) + np.abs(e2z)
            if np.abs(det) < _RAY_EPS_DET * scale * scale:
                # ray parallel to the plane: ambiguous only when the origin sits in it
                nx, ny, nz = _cross3(e1x, e1y, e1z, e2x, e2y, e2z)
                nn = np.sqrt(nx * nx + ny * ny + nz * nz)
                if nn > 0.0:
                    dist = np.abs(nx * (p[0] - a[0]) + ny * (p[1] - a[1]) + nz * (p[2] - a[2])) / nn
                    if dist < 1e-9 * scale:
                        ambiguous = True
                continue
            invdet = 1.0 / det
            tx, ty, tz = p[0] - a[0], p[1] - a[1], p[2] - a[2]
            u = (tx * px + ty * py + tz * pz) * invdet
            if u < -_RAY_EPS_BARY or u > 1.0 + _RAY_EPS_BARY:
                continue
            qx = ty * e1z - tz * e1y
            qy = tz * e1x - tx * e1z
            qz = tx * e1y - ty * e1x
            v = (d[0] * qx + d[1] * qy + d[2] * qz) * invdet
            if v < -_RAY_EPS_BARY or u + v > 1.0 + _RAY_EPS_BARY:
                continue
            th = (e2x * qx + e2y * qy + e2z * qz) * invdet
            if th <= _RAY_EPS_T:
                if th > -_RAY_EPS_T:
                    ambiguous = True  # origin lies on this triangle's plane patch
                continue
            if (
                u < _RAY_EPS_BARY
                or v < _RAY_EPS_BARY
                or u + v > 1.0 - _RAY_EPS_BARY
            ):
                ambiguous = True
            crossings += 1
    return crossings, ambiguous


@njit(cache=True, parallel=True)
def bvh_contains(points, seeds, tris, bounds_lo, bounds_hi, left_child, leaf_start, leaf_count, order):
    """Inside test by ray-casting parity with deterministic per-point jitter.

    seeds are uint64 hashes of the query coordinates; an ambiguous hit
    (edge/vertex graze or on-surface origin) triggers up to 3 re-jitters.
    """
    n = points.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in prange(n):
        p = points[i]
        crossings = 0
        for attempt in range(4):
            dx, dy, dz = _hash_direction(seeds[i], attempt)
            crossings, ambiguous = _ray_parity(
                p, dx, dy, dz, tris, bounds_lo, bounds_hi, left_child, leaf_start, leaf_count, order
            )
            if not ambiguous:
                break
        out[i] = (crossings % 2) == 1
    return out


@njit(cache=True, parallel=True)
def brute_distance_kernel(points, tris):
    """BVH-free minimum over all triangles with the same per-triangle routine.

    Exists so the BVH path can be checked for *bitwise* equality: correct
    pruning must return the same winning triangle's distance.
    """
    n = points.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        best = np.inf
        for t in range(tris.shape[0]):
            d = _tri_dist_sq(tris[t, 0], tris[t, 1], tris[t, 2], points[i])
            if d < best:
                best = d
        out[i] = np.sqrt(best)
    return out


def point_hashes(points: np.ndarray) -> np.ndarray:
    """Deterministic uint64 hash of each 3D point's float64 bit pattern."""
    bits = np.ascontiguousarray(points, dtype=np.float64).view(np.uint64)
    h = bits[:, 0] * np.uint64(0x9E3779B97F4A7C15)
    h ^= bits[:, 1] * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= bits[:, 2] * np.uint64(0x165667B19E3779F9)
    return h


@njit(cache=True)
def _tri_pair_intersects(a0, a1, a2, b0, b1, b2, eps):
    # Moller-style interval overlap test with unit plane normals so eps is a
    # world length. Coplanar pairs report clean (cannot occur in valid input
    # except as flat-region neighbours, which only touch along edges).
    n2x, n2y, n2z = _cross3(b1[0] - b0[0], b1[1] - b0[1], b1[2] - b0[2], b2[0] - b0[0], b2[1] - b0[1], b2[2] - b0[2])
    nn2 = np.sqrt(n2x * n2x + n2y * n2y + n2z * n2z)
    if nn2 == 0.0:
        return False
    n2x, n2y, n2z = n2x / nn2, n2y / nn2, n2z / nn2
    da0 = n2x * (a0[0] - b0[0]) + n2y * (a0[1] - b0[1]) + n2z * (a0[2] - b0[2])
    da1 = n2x * (a1[0] - b0[0]) + n2y * (a1[1] - b0[1]) + n2z * (a1[2] - b0[2])
    da2 = n2x * (a2[0] - b0[0]) + n2y * (a2[1] - b0[1]) + n2z * (a2[2] - b0[2])
    if (da0 > eps and da1 > eps and da2 > eps) or (da0 < -eps and da1 < -eps and da2 < -eps):
        return False
    n1x, n1y, n1z = _cross3(a1[0] - a0[0], a1[1] - a0[1], a1[2] - a0[2], a2[0] - a0[0], a2[1] - a0[1], a2[2] - a0[2])
    nn1 = np.sqrt(n1x * n1x + n1y * n1y + n1z * n1z)
    if nn1 == 0.0:
        return False
    n1x, n1y, n1z = n1x / nn1, n1y / nn1, n1z / nn1
    db0 = n1x * (b0[0] - a0[0]) + n1y * (b0[1] - a0[1]) + n1z * (b0[2] - a0[2])
    db1 = n1x * (b1[0] - a0[0]) + n1y * (b1[1] - a0[1]) + n1z * (b1[2] - a0[2])
    db2 = n1x * (b2[0] - a0[0]) + n1y * (b2[1] - a0[1]) + n1z * (b2[2] - a0[2])
    if (db0 > eps and db1 > eps and db2 > eps) or (db0 < -eps and db1 < -eps and db2 < -eps):
        return False
    if abs(da0) <= eps and abs(da1) <= eps and abs(da2) <= eps:
        return False  # coplanar
    lx, ly, lz = _cross3(n1x, n1y, n1z, n2x, n2y, n2z)
    ll = np.sqrt(lx * lx + ly * ly + lz * lz)
    if ll < 1e-12:
        return False  # parallel but not coplanar within eps: no contact
    lx, ly, lz = lx / ll, ly / ll, lz / ll
    ok_a, lo_a, hi_a = _interval(a0, a1, a2, da0, da1, da2, lx, ly, lz, eps)
    if not ok_a:
        return False
    ok_b, lo_b, hi_b = _interval(b0, b1, b2, db0, db1, db2, lx, ly, lz, eps)
    if not ok_b:
        return False
    lo = max(lo_a, lo_b)
    hi = min(hi_a, hi_b)
    return hi - lo > eps


@njit(cache=True, inline="always")
def _cross3(ax, ay, az, bx, by, bz):
    return ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx


@njit(cache=True, inline="always")
def _interval(v0, v1, v2, d0, d1, d2, lx, ly, lz, eps):
    """Projection interval of the triangle's plane-crossing set onto the line.

    Crossing points are on-plane vertices plus strict sign-change edge points.
    Returns (found, lo, hi).
    """
    lo = np.inf
    hi = -np.inf
    found = False
    p0 = lx * v0[0] + ly * v0[1] + lz * v0[2]
    p1 = lx * v1[0] + ly * v1[1] + lz * v1[2]
    p2 = lx * v2[0] + ly * v2[1] + lz * v2[2]
    ps = (p0, p1, p2)
    ds = (d0, d1, d2)
    for i in range(3):
        if abs(ds[i]) <= eps:
            found = True
            if ps[i] < lo:
                lo = ps[i]
            if ps[i] > hi:
                hi = ps[i]
    for i in range(3):
        j = (i + 1) % 3
        if ds[i] > eps and ds[j] < -eps or ds[i] < -eps and ds[j] > eps:
            t = ps[i] + (ps[j] - ps[i]) * ds[i] / (ds[i] - ds[j])
            found = True
            if t < lo:
                lo = t
            if t > hi:
                hi = t
    return found, lo, hi


@njit(cache=True)
def self_intersections(tris, faces, bounds_lo, bounds_hi, left_child, leaf_start, leaf_count, order, eps):
    """Count intersecting non-adjacent triangle pairs (shared-vertex pairs skipped)."""
    m = tris.shape[0]
    bad = 0
    stack = np.empty(64, dtype=np.int64)
    for i in range(m):
        lo_i = np.empty(3, dtype=np.float64)
        hi_i = np.empty(3, dtype=np.float64)
        for k in range(3):
            lo_i[k] = min(tris[i, 0, k], min(tris[i, 1, k], tris[i, 2, k])) - eps
            hi_i[k] = max(tris[i, 0, k], max(tris[i, 1, k], tris[i, 2, k])) + eps
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            overlap = True
            for k in range(3):
                if lo_i[k] > bounds_hi[node][k] or hi_i[k] < bounds_lo[node][k]:
                    overlap = False
                    break
            if not overlap:
                continue
            lc = left_child[node]
            if lc >= 0:
                stack[top] = lc
                stack[top + 1] = lc + 1
                top += 2
                continue
            s = leaf_start[node]
            for jj in range(leaf_count[node]):
                j = order[s + jj]
                if j <= i:
                    continue
                shared = False
                for u in range(3):
                    for v in range(3):
                        if faces[i, u] == faces[j, v]:
                            shared = True
                if shared:
                    continue
                if _tri_pair_intersects(tris[i, 0], tris[i, 1], tris[i, 2], tris[j, 0], tris[j, 1], tris[j, 2], eps):
                    bad += 1
    return bad


@njit(cache=True)
def rasterize_depth(tris, eye, right, up, forward, fx, fy, cx, cy, width, height):
    """Ray-cast depth buffer: distance along each pixel ray to the nearest triangle.

    Serial over triangles so ties resolve by triangle order (deterministic).
    Returns a (height, width) array of ray parameters t, inf where nothing is hit.
    """
    depth = np.full((height, width), np.inf, dtype=np.float64)
    m = tris.shape[0]
    for t in range(m):
        # project the three vertices to pixel coordinates
        ok = True
        us = np.empty(3, dtype=np.float64)
        vs = np.empty(3, dtype=np.float64)
        for j in range(3):
            px = tris[t, j, 0] - eye[0]
            py = tris[t, j, 1] - eye[1]
            pz = tris[t, j, 2] - eye[2]
            xc = px * right[0] + py * right[1] + pz * right[2]
            yc = px * up[0] + py * up[1] + pz * up[2]
            zc = px * forward[0] + py * forward[1] + pz * forward[2]
            if zc < 1e-6:
                ok = False
                break
            us[j] = fx * xc / zc + cx
            vs[j] = fy * yc / zc + cy
        if not ok:
            continue
        u0 = max(0, int(np.floor(min(us[0], min(us[1], us[2])))))
        u1 = min(width - 1, int(np.ceil(max(us[0], max(us[1], us[2])))))
        v0 = max(0, int(np.floor(min(vs[0], min(vs[1], vs[2])))))
        v1 = min(height - 1, int(np.ceil(max(vs[0], max(vs[1], vs[2])))))
        if u0 > u1 or v0 > v1:
            continue
        a = tris[t, 0]
        e1x, e1y, e1z = tris[t, 1, 0] - a[0], tris[t, 1, 1] - a[1], tris[t, 1, 2] - a[2]
        e2x, e2y, e2z = tris[t, 2, 0] - a[0], tris[t, 2, 1] - a[1], tris[t, 2, 2] - a[2]
        for v in range(v0, v1 + 1):
            for u in range(u0, u1 + 1):
                # pixel ray in world coordinates
                dxc = (u - cx) / fx
                dyc = (v - cy) / fy
                dx = right[0] * dxc + up[0] * dyc + forward[0]
                dy = right[1] * dxc + up[1] * dyc + forward[1]
                dz = right[2] * dxc + up[2] * dyc + forward[2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if np.abs(det) < 1e-16:
                    continue
                invdet = 1.0 / det
                tx, ty, tz = eye[0] - a[0], eye[1] - a[1], eye[2] - a[2]
                uu = (tx * px + ty * py + tz * pz) * invdet
                if uu < 0.0 or uu > 1.0:
                    continue
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                vv = (dx * qx + dy * qy + dz * qz) * invdet
                if vv < 0.0 or uu + vv > 1.0:
                    continue
                th = (e2x * qx + e2y * qy + e2z * qz) * invdet
                if th > 1e-9 and th < depth[v, u]:
                    depth[v, u] = th
    return depth
