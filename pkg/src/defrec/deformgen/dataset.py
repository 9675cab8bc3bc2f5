"""Training dataset generation and loading.

Each sample pairs a rendered single-view cloud with ground-truth occupancy
queries from a fresh deformation. Every sample derives from its own seed
(master seed, index), so generation is reproducible byte-for-byte and can be
parallelized across samples without changing the output.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DeformationRejectedError, EmptyRenderError
from ..geometry.cloud import ObservationCloud, normalize_cloud
from ..geometry.io import read_cloud_text, write_cloud_text
from ..geometry.mesh import SegmentedObject
from ..util import config_hash, rng_for
from .camera import CameraConfig, random_camera, render_points
from .fields import FieldConfig, deform, random_admissible_field

MANIFEST_VERSION = 1


@dataclass
class TrainingSample:
    """One (Q^gt, P) pair in the cloud's normalized frame."""

    cloud: ObservationCloud
    queries: np.ndarray  # (m, 3) normalized coordinates
    labels: np.ndarray  # (m,) global segment labels
    sdists: np.ndarray  # (m,) normalized signed distances
    meta: dict


def make_sample(prior: SegmentedObject, index: int, seed: int, t: int, k: int,
                cam_cfg: CameraConfig, field_cfg: FieldConfig):
    """Generate sample `index`: deform, render, ISS-label. Returns (sample, deformed)."""
    from .iss import iss_sample

    rng = rng_for(seed, index)
    last_err = None
    for _ in range(20):
        field = random_admissible_field(prior, field_cfg, rng, seed_note=(seed, index))
        try:
            deformed = deform(prior, field)
            break
        except DeformationRejectedError as err:
            last_err = err
    else:
        raise DeformationRejectedError(f"sample {index}: {last_err}")

    for _ in range(cam_cfg.retries):
        cam = random_camera(rng, deformed, cam_cfg)
        try:
            points = render_points(deformed, cam, rng, min_points=cam_cfg.min_points)
            break
        except EmptyRenderError as err:
            last_err = err
    else:
        raise EmptyRenderError(f"sample {index}: {last_err}")

    cloud = normalize_cloud(points)
    iss = iss_sample(deformed, t, k, rng)
    sample = TrainingSample(
        cloud=cloud,
        queries=cloud.to_normalized(iss.points),
        labels=iss.labels,
        sdists=iss.sdists * cloud.scale,
        meta={
            "index": index,
            "seed": [seed, index],
            "field": field.to_dict(),
            "camera": cam.to_dict(),
            "n_points": len(points),
            "n_queries": len(iss.labels),
        },
    )
    return sample, deformed


def _write_sample(out_dir: Path, sample: TrainingSample) -> None:
    index = sample.meta["index"]
    write_cloud_text(out_dir / "samples" / f"sample_{index:06d}.cloud.txt", sample.cloud.points)
    write_cloud_text(
        out_dir / "samples" / f"sample_{index:06d}.queries.txt",
        sample.queries,
        labels=sample.labels,
        sdists=sample.sdists,
    )


def _worker(args):
    out_dir, prior, index, seed, t, k, cam_cfg, field_cfg = args
    sample, _ = make_sample(prior, index, seed, t, k, cam_cfg, field_cfg)
    _write_sample(Path(out_dir), sample)
    return sample.meta


def generate_dataset(prior: SegmentedObject, out_dir, n_samples: int, t: int = 128, k: int = 128,
                     seed: int = 0, cam_cfg: CameraConfig | None = None,
                     field_cfg: FieldConfig | None = None, threads: int = 1,
                     object_name: str | None = None) -> Path:
    """Write n_samples training records plus a manifest recording all seeds."""
    cam_cfg = cam_cfg or CameraConfig()
    field_cfg = field_cfg or FieldConfig()
    out_dir = Path(out_dir)
    (out_dir / "samples").mkdir(parents=True, exist_ok=True)

    jobs = [(str(out_dir), prior, i, seed, t, k, cam_cfg, field_cfg) for i in range(n_samples)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            metas = list(pool.map(_worker, jobs, chunksize=8))
    else:
        metas = [_worker(job) for job in jobs]

    config = {
        "object": object_name or prior.name,
        "n_samples": n_samples,
        "t": t,
        "k": k,
        "seed": seed,
        "camera": cam_cfg.__dict__ | {"axis": list(cam_cfg.axis), "distance_range": list(cam_cfg.distance_range)},
        "fields": {
            "amplitude": list(field_cfg.amplitude),
            "rho": list(field_cfg.rho),
            "bend_curvature": list(field_cfg.bend_curvature),
            "twist_rate": list(field_cfg.twist_rate),
            "kind_weights": field_cfg.kind_weights,
            "attachment": list(field_cfg.attachment),
            "interaction_zmin": field_cfg.interaction_zmin,
        },
    }
    manifest = {
        "version": MANIFEST_VERSION,
        "config": config,
        "config_hash": config_hash(config),
        "n_classes": prior.n_segments,
        "samples": metas,
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def load_manifest(data_dir) -> dict:
    with open(Path(data_dir) / "manifest.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def load_dataset(data_dir) -> list[TrainingSample]:
    """Load all samples; cloud normalization is recomputed from the raw points."""
    data_dir = Path(data_dir)
    manifest = load_manifest(data_dir)
    samples = []
    for meta in manifest["samples"]:
        index = meta["index"]
        raw, _, _ = read_cloud_text(data_dir / "samples" / f"sample_{index:06d}.cloud.txt")
        q, labels, sd = read_cloud_text(data_dir / "samples" / f"sample_{index:06d}.queries.txt")
        samples.append(TrainingSample(normalize_cloud(raw), q, labels, sd, meta))
    return samples
