"""Small shared helpers: canonical JSON, config hashing, seeded generators."""
from __future__ import annotations

import hashlib
import json

import numpy as np


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj, length: int = 8) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:length]


def rng_for(*key) -> np.random.Generator:
    """Deterministic generator from a structured key, e.g. rng_for(seed, index).

    String components are folded in via a stable hash so call sites can tag
    independent streams ("train", "init", ...) without seed collisions.
    """
    parts = []
    for part in key:
        if isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()[:8]
            parts.append(int.from_bytes(digest, "little"))
        else:
            parts.append(int(part))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(parts)))
