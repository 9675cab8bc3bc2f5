"""Experiment drivers: accuracy/timing sweeps over query counts, noise and
dropout grids for uncertainty, and the synthetic end-to-end puncture
evaluation against ground-truth deformed meshes.

All emitted CSVs carry the config hash in their filename and are reproducible
from the recorded seeds.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import activation_entropy, global_uncertainty, mcd_entropy
from .deformgen.camera import CameraConfig, random_camera, render_points
from .deformgen.fields import FieldConfig, deform, random_admissible_field
from .errors import SegmentNotReconstructedError, ShapeMismatchError
from .geometry.cloud import normalize_cloud
from .geometry.mesh import SegmentedObject
from .phantoms import PhantomSpec, make_phantom
from .reconstruct import dense_infer, geometric_centroid, plan_puncture, uwc_centroid
from .util import config_hash, rng_for


@dataclass
class ExperimentConfig:
    object_name: str = "cylinder-phantom"
    query_points: tuple = (10000, 20000, 40000)
    noise_levels: tuple = (0.0, 0.01, 0.03)  # normalized units on the cloud
    drop_fractions: tuple = (0.0, 0.5)
    n_repetitions: int = 20
    mc_samples: int = 30
    uncertainty_queries: int = 10000
    seed: int = 0
    out_dir: str = "sweep_out"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for key in ("query_points", "noise_levels", "drop_fractions"):
            d[key] = list(d[key])
        return d


def deformation_cases(prior: SegmentedObject, spec: PhantomSpec, n: int, seed: int,
                      cam_cfg: CameraConfig | None = None, field_cfg: FieldConfig | None = None):
    """Fresh (deformed object, rendered cloud, metadata) triples for evaluation."""
    cam_cfg = cam_cfg or CameraConfig()
    field_cfg = field_cfg or FieldConfig(attachment=spec.attachment, interaction_zmin=spec.interaction_zmin)
    cases = []
    for i in range(n):
        rng = rng_for(seed, "eval-case", i)
        field = random_admissible_field(prior, field_cfg, rng)
        deformed = deform(prior, field)
        for _ in range(cam_cfg.retries):
            cam = random_camera(rng, deformed, cam_cfg)
            try:
                points = render_points(deformed, cam, rng, min_points=cam_cfg.min_points)
                break
            except Exception:
                continue
        cases.append((deformed, normalize_cloud(points), {"case": i, "field": field.to_dict()}))
    return cases


def true_roi_centroids(deformed: SegmentedObject) -> dict:
    """Exact volume centroids of all ROI segments of a deformed object."""
    return {sid: mesh.volume_centroid() for sid, mesh in deformed.segments[1:]}


def perturb_cloud(cloud, noise: float, drop: float, rng):
    """Isotropic Gaussian noise (normalized units) and point dropout on the cloud."""
    pts = cloud.points
    if drop > 0:
        keep = rng.random(len(pts)) >= drop
        if keep.sum() >= 16:
            pts = pts[keep]
    if noise > 0:
        pts = pts + rng.normal(0.0, noise / cloud.scale, size=pts.shape)
    return cloud.with_points(pts)


# ---------------------------------------------------------------------------
# sweeps


def _check_model_matches(model, prior: SegmentedObject) -> None:
    if model.n_classes != prior.n_segments:
        raise ShapeMismatchError(
            f"model was trained for {model.n_classes} segments but {prior.name!r} has {prior.n_segments}"
        )


def run_sweep(model, prior: SegmentedObject, spec: PhantomSpec, config: ExperimentConfig) -> dict:
    """Timing/accuracy vs query count, and uncertainty/centroid grids over
    noise x drop. Returns {table name: list of rows}; write_sweep_tables emits CSV."""
    _check_model_matches(model, prior)
    cases = deformation_cases(prior, spec, config.n_repetitions, config.seed)

    timing_rows = []
    for n_q in config.query_points:
        errors = []
        times = []
        for deformed, cloud, meta in cases:
            truth = true_roi_centroids(deformed)
            t0 = time.perf_counter()
            recon = dense_infer(model, cloud, n_dense=n_q, seed=config.seed)
            times.append((time.perf_counter() - t0) * 1000.0)
            errors.append(_mean_centroid_error_mm(recon, truth))
        timing_rows.append({
            "query_points": n_q,
            "mean_centroid_err_mm": float(np.nanmean(errors)),
            "median_centroid_err_mm": float(np.nanmedian(errors)),
            "mean_time_ms": float(np.mean(times)),
            "median_time_ms": float(np.median(times)),
        })

    uncertainty_rows = []
    centroid_rows = []
    for noise in config.noise_levels:
        for drop in config.drop_fractions:
            h_act = []
            h_mcd = []
            err_geo = []
            err_uwc = []
            for ci, (deformed, cloud, meta) in enumerate(cases):
                rng = rng_for(config.seed, "perturb", ci, int(noise * 1000), int(drop * 100))
                noisy = perturb_cloud(cloud, noise, drop, rng)
                truth = true_roi_centroids(deformed)
                recon = dense_infer(model, noisy, n_dense=config.uncertainty_queries, seed=config.seed)
                if recon.empty:
                    continue
                p_norm = noisy.normalized().astype(np.float32)
                h_a = activation_entropy(model, p_norm, recon.points_norm)
                h_act.append(global_uncertainty(h_a))
                h_m = mcd_entropy(model, p_norm, recon.points_norm, m=config.mc_samples, seed=config.seed)
                h_mcd.append(global_uncertainty(h_m))
                err_geo.append(_mean_centroid_error_mm(recon, truth))
                err_uwc.append(_mean_centroid_error_mm(recon.with_uncertainties(h_m), truth, method="uwc"))
            for method, values in (("activation", h_act), ("mcd", h_mcd)):
                uncertainty_rows.append({
                    "noise": noise, "drop": drop, "method": method,
                    "h_global": float(np.mean(values)) if values else float("nan"),
                    "n_cases": len(values),
                })
            for method, values in (("geo", err_geo), ("uwc", err_uwc)):
                centroid_rows.append({
                    "noise": noise, "drop": drop, "centroid_method": method,
                    "mean_err_mm": float(np.nanmean(values)) if values else float("nan"),
                    "median_err_mm": float(np.nanmedian(values)) if values else float("nan"),
                })

    return {"timing": timing_rows, "uncertainty": uncertainty_rows, "centroid": centroid_rows}


def _mean_centroid_error_mm(recon, truth: dict, method: str = "geo") -> float:
    errs = []
    for sid, center in truth.items():
        try:
            c = geometric_centroid(recon, sid) if method == "geo" else uwc_centroid(recon, sid)
        except SegmentNotReconstructedError:
            return float("nan")
        errs.append(np.linalg.norm(c - center) * 1000.0)
    return float(np.mean(errs))


def write_sweep_tables(tables: dict, config: ExperimentConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = config_hash(config.to_dict())
    paths = []
    for name, rows in tables.items():
        path = out_dir / f"{name}_{h}.csv"
        _write_csv(path, rows)
        paths.append(path)
    return paths


def _write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if not rows:
            return
        cols = list(rows[0].keys())
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def heldout_centroid_errors(model, prior: SegmentedObject, spec: PhantomSpec, n: int = 20,
                            seed: int = 1000, query_counts=(10000, 40000), drop: float = 0.0,
                            noise: float = 0.0, cases=None) -> dict:
    """Per-deformation mean-ROI centroid error (mm) at each query count.

    Deformations are freshly seeded (held out from any training set when the
    seed differs). Returns {query_count: array of per-deformation errors}.
    """
    cases = cases if cases is not None else deformation_cases(prior, spec, n, seed)
    out = {nq: [] for nq in query_counts}
    for ci, (deformed, cloud, meta) in enumerate(cases):
        truth = true_roi_centroids(deformed)
        used = cloud
        if drop > 0 or noise > 0:
            used = perturb_cloud(cloud, noise, drop, rng_for(seed, "heldout-perturb", ci))
        for nq in query_counts:
            recon = dense_infer(model, used, n_dense=nq, seed=seed)
            out[nq].append(_mean_centroid_error_mm(recon, truth))
    return {nq: np.asarray(v) for nq, v in out.items()}


# ---------------------------------------------------------------------------
# end-to-end puncture evaluation


def model_labeler(model, n_dense: int, seed: int):
    def run(deformed, cloud):
        return dense_infer(model, cloud, n_dense=n_dense, seed=seed)
    return run


def oracle_labeler(n_dense: int, seed: int):
    """Perfect predictions from the true deformed meshes (upper-bound check)."""
    from .reconstruct import DenseReconstruction

    def run(deformed, cloud):
        rng = rng_for(seed, "oracle-queries")
        lo, hi = deformed.bounds()
        span = hi - lo
        queries = rng.uniform(lo - 0.1 * span, hi + 0.1 * span, size=(n_dense, 3))
        labels = deformed.occupancy_label(queries)
        sd = deformed.signed_distance(queries)
        n_classes = deformed.n_segments
        probs = np.eye(n_classes + 1)[labels]
        return DenseReconstruction(
            points_norm=cloud.to_normalized(queries), points_world=queries, labels=labels,
            probs=probs, sdists_norm=sd * cloud.scale, sdists_world=sd,
        )
    return run


def eval_puncture(prior: SegmentedObject, spec: PhantomSpec, labeler, n_deformations: int = 10,
                  seed: int = 0, standoff: float = 0.05) -> dict:
    """Plan punctures to every ROI over fresh deformations; a hit means the
    planned target lies inside the true deformed ROI mesh."""
    cases = deformation_cases(prior, spec, n_deformations, seed)
    rows = []
    for deformed, cloud, meta in cases:
        recon = labeler(deformed, cloud)
        for sid, _ in deformed.segments[1:]:
            row = {"object": prior.name, "deformation": meta["case"], "roi": sid}
            if recon.empty:
                rows.append(row | {"hit": 0, "error_mm": float("nan"), "note": "empty reconstruction"})
                continue
            try:
                target = geometric_centroid(recon, sid)
                plan = plan_puncture(recon, target, standoff=standoff)
            except Exception as err:
                rows.append(row | {"hit": 0, "error_mm": float("nan"), "note": type(err).__name__})
                continue
            true_center = deformed.mesh(sid).volume_centroid()
            err_mm = float(np.linalg.norm(target - true_center) * 1000.0)
            hit = int(deformed.occupancy_label(plan.target[None])[0] == sid)
            rows.append(row | {"hit": hit, "error_mm": err_mm, "note": ""})
    hits = [r["hit"] for r in rows]
    return {"rows": rows, "success_rate": float(np.mean(hits)) if hits else 0.0}


def write_puncture_table(result: dict, config_dict: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"puncture_{config_hash(config_dict)}.csv"
    _write_csv(path, [dict(r, note=r.get("note", "")) for r in result["rows"]])
    return path
