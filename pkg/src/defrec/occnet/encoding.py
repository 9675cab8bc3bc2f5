"""Sinusoidal query encoding with negative exponents.

Bands run 2^-4 .. 2^5; each band contributes sin and cos applied element-wise
to (x, y, z), so a 3D point maps to 60 values. The stretched low-frequency
bands keep points beyond [-1,1]^3 uniquely encoded, which matters because the
normalization comes from a partial view and full-object queries reach outside.
"""
from __future__ import annotations

import numpy as np

FREQ_EXPONENTS = np.arange(-4, 6)
ENCODING_DIM = 2 * 3 * len(FREQ_EXPONENTS)  # 60


def encode_query(q: np.ndarray) -> np.ndarray:
    """Encode points (n, 3) or (3,) into (n, 60), band-major (sin triple, cos triple)."""
    pts = np.atleast_2d(np.asarray(q, dtype=np.float64))
    n = pts.shape[0]
    out = np.empty((n, ENCODING_DIM), dtype=np.float64)
    for i, e in enumerate(FREQ_EXPONENTS):
        arg = (2.0**e * np.pi) * pts
        out[:, 6 * i : 6 * i + 3] = np.sin(arg)
        out[:, 6 * i + 3 : 6 * i + 6] = np.cos(arg)
    return out


def encode_query_f32(q: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Single-precision encoding for the network-facing path (same layout)."""
    pts = np.asarray(q, dtype=np.float32)
    n = pts.shape[0]
    if out is None:
        out = np.empty((n, ENCODING_DIM), dtype=np.float32)
    for i, e in enumerate(FREQ_EXPONENTS):
        arg = np.float32(2.0**e * np.pi) * pts
        np.sin(arg, out=out[:, 6 * i : 6 * i + 3])
        np.cos(arg, out=out[:, 6 * i + 3 : 6 * i + 6])
    return out
