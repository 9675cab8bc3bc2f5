"""Sweep driver and synthetic puncture evaluation."""
from __future__ import annotations

import numpy as np
import pytest

from defrec.experiments import (
    ExperimentConfig,
    deformation_cases,
    eval_puncture,
    model_labeler,
    oracle_labeler,
    run_sweep,
    true_roi_centroids,
    write_puncture_table,
    write_sweep_tables,
)
from defrec.geometry.io import read_table
from defrec.phantoms import make_phantom


@pytest.fixture(scope="module")
def cylinder():
    return make_phantom("cylinder-phantom")


def test_deformation_cases_deterministic(cylinder):
    obj, spec = cylinder
    a = deformation_cases(obj, spec, 2, seed=3)
    b = deformation_cases(obj, spec, 2, seed=3)
    for (da, ca, ma), (db, cb, mb) in zip(a, b):
        assert np.array_equal(ca.points, cb.points)
        assert ma == mb


def test_true_roi_centroids_displaced(cylinder):
    obj, spec = cylinder
    (deformed, _, meta), = deformation_cases(obj, spec, 1, seed=4)
    truth = true_roi_centroids(deformed)
    assert set(truth) == {2, 3, 4}
    rest = {sid: mesh.volume_centroid() for sid, mesh in obj.segments[1:]}
    moved = max(np.linalg.norm(truth[s] - rest[s]) for s in truth)
    assert moved > 1e-6  # the deformation actually moved the ROIs


def test_oracle_puncture_is_perfect(cylinder):
    obj, spec = cylinder
    result = eval_puncture(obj, spec, oracle_labeler(20000, seed=0), n_deformations=2, seed=5)
    assert result["success_rate"] == 1.0
    assert len(result["rows"]) == 2 * 3


def test_puncture_rows_and_table(tmp_path, cylinder):
    obj, spec = cylinder
    result = eval_puncture(obj, spec, oracle_labeler(8000, seed=0), n_deformations=2, seed=6)
    path = write_puncture_table(result, {"n": 2}, tmp_path)
    rows = path.read_text().strip().splitlines()
    assert rows[0].startswith("object,deformation,roi,hit")
    assert len(rows) == 1 + 6


def test_empty_reconstruction_counts_as_miss(cylinder):
    from defrec.reconstruct import DenseReconstruction

    obj, spec = cylinder

    def empty_labeler(deformed, cloud):
        z = np.zeros((0, 3))
        return DenseReconstruction(z, z, np.zeros(0, dtype=np.int64), np.zeros((0, 5)),
                                   np.zeros(0), np.zeros(0), empty=True)

    result = eval_puncture(obj, spec, empty_labeler, n_deformations=1, seed=7)
    assert result["success_rate"] == 0.0
    assert all(r["note"] == "empty reconstruction" for r in result["rows"])


def test_sweep_tables_shape_and_hash(tmp_path, tiny_model, cylinder):
    obj, spec = cylinder
    cfg = ExperimentConfig(
        object_name=obj.name, query_points=(2000, 20000), noise_levels=(0.0,),
        drop_fractions=(0.0,), n_repetitions=2, mc_samples=3, uncertainty_queries=600, seed=1,
    )
    tables = run_sweep(tiny_model, obj, spec, cfg)
    assert len(tables["timing"]) == 2
    assert {r["query_points"] for r in tables["timing"]} == {2000, 20000}
    assert len(tables["uncertainty"]) == 2  # (noise, drop) x methods
    paths = write_sweep_tables(tables, cfg, tmp_path)
    for p in paths:
        assert p.exists()
        assert "_" in p.stem  # config hash in the filename
    timing = read_table(tmp_path / paths[0].name) if False else None
    # timing increases with query count (median of repetitions)
    t = {r["query_points"]: r["median_time_ms"] for r in tables["timing"]}
    assert t[20000] >= t[2000]


def test_model_object_mismatch_rejected(tiny_model):
    from defrec.errors import ShapeMismatchError
    from defrec.geometry.mesh import SegmentedObject
    from defrec.phantoms import PhantomSpec, icosphere

    body = icosphere(1.0, subdivisions=2)
    two_seg = SegmentedObject([(1, body), (2, icosphere(0.2, subdivisions=1))], name="two")
    spec = PhantomSpec("two", attachment=(-1.0, -0.9), interaction_zmin=-0.5)
    cfg = ExperimentConfig(n_repetitions=1, query_points=(100,), noise_levels=(), drop_fractions=())
    with pytest.raises(ShapeMismatchError):
        run_sweep(tiny_model, two_seg, spec, cfg)  # tiny_model expects 4 segments


def test_paper_scale_defaults_echo():
    """Default values mirror the full-scale experiment configuration."""
    from defrec.analysis import DEFAULT_MC_SAMPLES
    from defrec.cli import build_parser
    from defrec.dhcalib.trackersim import DEFAULT_SAMPLES
    from defrec.occnet import TrainConfig
    from defrec.reconstruct import dense_infer
    import inspect

    assert DEFAULT_MC_SAMPLES == 30
    assert DEFAULT_SAMPLES == 500
    cfg = TrainConfig()
    assert (cfg.batch_size, cfg.epochs, cfg.lr, cfg.lambda_sd) == (40, 700, 5e-4, 100.0)
    sig = inspect.signature(dense_infer)
    assert sig.parameters["n_coarse"].default == 10000
    assert sig.parameters["n_dense"].default == 40000
    # CLI accepts the full-scale sample count and the t=k=128 defaults
    args = build_parser().parse_args(["gen-data", "--n", "30000"])
    merged = dict(args.defaults) | {k: v for k, v in vars(args).items() if k not in ("func", "defaults", "config")}
    assert merged["n"] == 30000 and merged["t"] == 128 and merged["k"] == 128


def test_sweep_centroid_units_mm(tiny_model, cylinder):
    """A synthetic check that errors are reported in millimeters of world scale."""
    from defrec.reconstruct import DenseReconstruction
    from defrec.experiments import _mean_centroid_error_mm

    truth = {2: np.array([0.0, 0.0, 0.0])}
    pts = np.array([[0.001, 0.0, 0.0], [0.003, 0.0, 0.0]])
    recon = DenseReconstruction(None, pts, np.array([2, 2]), np.zeros((2, 3)), np.zeros(2), np.zeros(2))
    assert _mean_centroid_error_mm(recon, truth) == pytest.approx(2.0)  # 2 mm
