"""Command-line front end.

Batch commands (gen-data, train, calibrate, sweep, eval-puncture) drive the
library directly. Runtime commands (infer, plan, uncertainty, explain) are
thin clients of the service layer: in-process by default, or against a
running server via --server. `serve` starts the HTTP service.

A JSON config file may supply any flag defaults; explicit flags override it.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import DefrecError


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help()
        return 2
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = _resolve_options(args)
        args.func(opts)
    except DefrecError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


def _resolve_options(args) -> argparse.Namespace:
    """Layer defaults < config file < explicit flags (parsed with SUPPRESS)."""
    merged = dict(args.defaults)
    config_path = getattr(args, "config", None) or vars(args).get("config")
    explicit = {k: v for k, v in vars(args).items() if k not in ("func", "defaults", "config")}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(merged)
        if unknown:
            raise ValueError(f"config keys not recognized for this command: {sorted(unknown)}")
        merged.update(file_cfg)
    merged.update(explicit)
    return argparse.Namespace(**merged)


def _add(sub, name: str, func, defaults: dict, help_text: str):
    p = sub.add_parser(name, help=help_text)
    p.set_defaults(func=func, defaults=defaults)
    p.add_argument("--config", help="JSON file with default values for this command's flags")
    for key, value in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            p.add_argument(flag, action="store_true", default=argparse.SUPPRESS)
        elif isinstance(value, (list, tuple)):
            p.add_argument(flag, nargs="+", type=type(value[0]) if value else str, default=argparse.SUPPRESS)
        elif value is None:
            p.add_argument(flag, default=argparse.SUPPRESS)
        else:
            p.add_argument(flag, type=type(value), default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defrec", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    _add(sub, "make-phantom", cmd_make_phantom,
         {"name": "cylinder-phantom", "out": "phantom"},
         "write a built-in phantom as OBJ segments + manifest")
    _add(sub, "gen-data", cmd_gen_data,
         {"prior": "cylinder-phantom", "n": 2000, "t": 128, "k": 128, "seed": 0,
          "out": "dataset", "threads": 1, "noise_sigma": 0.0005, "max_points": 800},
         "generate training samples (deform, render, ISS-label)")
    _add(sub, "train", cmd_train,
         {"data": "dataset", "epochs": 700, "batch": 40, "lr": 5e-4, "lambda_sd": 100.0,
          "latent": 256, "decoder_widths": [512, 512, 512], "dropout": 0.2, "point_drop": 0.5,
          "queries_per_sample": 0, "checkpoint_every": 0, "seed": 0, "out": "run"},
         "train the occupancy network on a generated dataset")
    _add(sub, "infer", cmd_infer,
         {"model": "model.ckpt", "cloud": "cloud.txt", "dense": 40000, "coarse": 10000,
          "seed": 0, "out": "recon.txt", "server": None},
         "dense two-stage reconstruction from a point cloud")
    _add(sub, "plan", cmd_plan,
         {"recon": "recon.txt", "segment": 2, "centroid": "geo", "standoff": 0.05,
          "out": None, "server": None},
         "puncture plan (target, entry, direction) from a reconstruction file")
    _add(sub, "uncertainty", cmd_uncertainty,
         {"model": "model.ckpt", "cloud": "cloud.txt", "method": "mcd", "m": 30,
          "dense": 40000, "seed": 0, "out": "recon_h.txt", "server": None},
         "per-point entropy (activation or MC dropout) + global uncertainty")
    _add(sub, "explain", cmd_explain,
         {"model": "model.ckpt", "cloud": "cloud.txt", "radius_frac": 0.2, "queries": 40000,
          "stride": 1, "seed": 0, "out": "explain.txt", "server": None},
         "masking-based per-input-point importance scores")
    _add(sub, "calibrate", cmd_calibrate,
         {"dh": "manufacturer.json", "data": "samples.csv", "mode": "full",
          "epochs": 2000, "lr": 1e-3, "batch": 64, "lambda_rot": 100.0, "seed": 0,
          "out": "calibrated.json"},
         "learn DH offsets + base pose from tracked poses")
    _add(sub, "sweep", cmd_sweep,
         {"model": "model.ckpt", "prior": "cylinder-phantom", "reps": 20,
          "query_points": [10000, 20000, 40000], "noise": [0.0, 0.01, 0.03],
          "drop": [0.0, 0.5], "mc_samples": 30, "uncertainty_queries": 10000,
          "seed": 0, "out": "sweep_out"},
         "accuracy/timing/uncertainty grids over fresh deformations")
    _add(sub, "eval-puncture", cmd_eval_puncture,
         {"model": "model.ckpt", "prior": "cylinder-phantom", "n": 10, "dense": 40000,
          "seed": 0, "out": "puncture_out", "oracle": False},
         "synthetic end-to-end puncture success evaluation")
    _add(sub, "serve", cmd_serve,
         {"host": "127.0.0.1", "port": 8239, "model": None},
         "run the HTTP inference service")
    return parser


def _resolve_prior(name_or_dir: str):
    from .deformgen.fields import FieldConfig
    from .geometry.io import load_object
    from .phantoms import PHANTOM_NAMES, PhantomSpec, make_phantom

    if name_or_dir in PHANTOM_NAMES:
        obj, spec = make_phantom(name_or_dir)
        return obj, spec
    obj = load_object(Path(name_or_dir) / "object.json")
    lo, hi = obj.bounds()
    height = float(hi[2] - lo[2])
    spec = PhantomSpec(
        name=obj.name,
        attachment=(float(lo[2]), float(lo[2]) + 0.15 * height),
        interaction_zmin=float(lo[2]) + 0.3 * height,
    )
    return obj, spec


# ---------------------------------------------------------------------------
# batch commands


def cmd_make_phantom(opts) -> None:
    from .geometry.io import save_object
    from .phantoms import make_phantom

    obj, spec = make_phantom(opts.name)
    path = save_object(obj, opts.out)
    print(f"wrote {path} ({obj.n_segments} segments)")


def cmd_gen_data(opts) -> None:
    from .deformgen.camera import CameraConfig
    from .deformgen.dataset import generate_dataset
    from .deformgen.fields import FieldConfig

    obj, spec = _resolve_prior(opts.prior)
    cam_cfg = CameraConfig(noise_sigma=opts.noise_sigma, max_points=opts.max_points)
    field_cfg = FieldConfig(attachment=spec.attachment, interaction_zmin=spec.interaction_zmin)
    path = generate_dataset(
        obj, opts.out, n_samples=opts.n, t=opts.t, k=opts.k, seed=opts.seed,
        cam_cfg=cam_cfg, field_cfg=field_cfg, threads=opts.threads, object_name=obj.name,
    )
    print(f"wrote {path}")


def cmd_train(opts) -> None:
    from .occnet.train import TrainConfig, train

    cfg = TrainConfig(
        batch_size=opts.batch, epochs=opts.epochs, lr=opts.lr, lambda_sd=opts.lambda_sd,
        point_drop=opts.point_drop, seed=opts.seed, latent_dim=opts.latent,
        decoder_widths=tuple(int(w) for w in opts.decoder_widths), dropout=opts.dropout,
        queries_per_sample=opts.queries_per_sample, checkpoint_every=opts.checkpoint_every,
        out_dir=opts.out,
    )
    result = train(cfg, opts.data)
    print(f"final loss {result.history[-1][3]:.4f}; checkpoint {result.checkpoint_path}")


def cmd_calibrate(opts) -> None:
    from .dhcalib.calibrate import CalibConfig, CalibData, calibrate
    from .dhcalib.chain import DHChain

    chain = DHChain.load(opts.dh)
    data = CalibData.load_csv(opts.data)
    cfg = CalibConfig(lr=opts.lr, epochs=opts.epochs, batch_size=opts.batch,
                      seed=opts.seed, lambda_rot=opts.lambda_rot)
    result = calibrate(chain, data, cfg, mode=opts.mode)
    result.chain.save(opts.out)
    print(json.dumps(result.report, indent=2, sort_keys=True))


def cmd_sweep(opts) -> None:
    from .experiments import ExperimentConfig, run_sweep, write_sweep_tables
    from .occnet.model import OccupancyModel

    obj, spec = _resolve_prior(opts.prior)
    model = OccupancyModel.load(opts.model)
    cfg = ExperimentConfig(
        object_name=obj.name,
        query_points=tuple(int(q) for q in opts.query_points),
        noise_levels=tuple(float(x) for x in opts.noise),
        drop_fractions=tuple(float(x) for x in opts.drop),
        n_repetitions=opts.reps, mc_samples=opts.mc_samples,
        uncertainty_queries=opts.uncertainty_queries, seed=opts.seed, out_dir=opts.out,
    )
    tables = run_sweep(model, obj, spec, cfg)
    for path in write_sweep_tables(tables, cfg, opts.out):
        print(f"wrote {path}")


def cmd_eval_puncture(opts) -> None:
    from .experiments import eval_puncture, model_labeler, oracle_labeler, write_puncture_table
    from .occnet.model import OccupancyModel

    obj, spec = _resolve_prior(opts.prior)
    if opts.oracle:
        labeler = oracle_labeler(opts.dense, opts.seed)
    else:
        model = OccupancyModel.load(opts.model)
        labeler = model_labeler(model, opts.dense, opts.seed)
    result = eval_puncture(obj, spec, labeler, n_deformations=opts.n, seed=opts.seed)
    cfg = {"prior": opts.prior, "n": opts.n, "dense": opts.dense, "seed": opts.seed, "oracle": opts.oracle}
    path = write_puncture_table(result, cfg, opts.out)
    print(f"success rate: {result['success_rate']:.3f} ({path})")


# ---------------------------------------------------------------------------
# runtime commands (service clients)


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    response = httpx.post(server.rstrip("/") + route, json=payload, timeout=600.0)
    if response.status_code != 200:
        raise DefrecError(f"server returned {response.status_code}: {response.text}")
    return response.json()


def _local_registry(model_path: str):
    from .service.core import ModelRegistry

    registry = ModelRegistry()
    model_id = registry.load(model_path)
    return registry, model_id


def cmd_infer(opts) -> None:
    from .service import schemas

    if opts.server:
        payload = {"model_id": Path(opts.model).stem, "cloud_path": str(opts.cloud),
                   "n_dense": opts.dense, "n_coarse": opts.coarse, "seed": opts.seed,
                   "out_path": str(opts.out)}
        body = _post(opts.server, "/infer", payload)
    else:
        from .service.core import infer_op

        registry, model_id = _local_registry(opts.model)
        req = schemas.InferRequest(model_id=model_id, cloud_path=str(opts.cloud), n_dense=opts.dense,
                                   n_coarse=opts.coarse, seed=opts.seed, out_path=str(opts.out))
        body = infer_op(registry, req).model_dump()
    print(json.dumps({k: body[k] for k in ("empty", "n_points", "label_counts", "out_path")}, sort_keys=True))


def cmd_plan(opts) -> None:
    from .service import schemas

    payload = {"recon_path": str(opts.recon), "segment": opts.segment,
               "centroid": opts.centroid, "standoff": opts.standoff}
    if opts.server:
        body = _post(opts.server, "/plan", payload)
    else:
        from .service.core import plan_op

        body = plan_op(schemas.PlanRequest(**payload)).model_dump()
    text = json.dumps(body, indent=2, sort_keys=True)
    if opts.out:
        Path(opts.out).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_uncertainty(opts) -> None:
    from .service import schemas

    if opts.server:
        payload = {"model_id": Path(opts.model).stem, "cloud_path": str(opts.cloud),
                   "method": opts.method, "m": opts.m, "n_dense": opts.dense,
                   "seed": opts.seed, "out_path": str(opts.out)}
        body = _post(opts.server, "/uncertainty", payload)
    else:
        from .service.core import uncertainty_op

        registry, model_id = _local_registry(opts.model)
        req = schemas.UncertaintyRequest(model_id=model_id, cloud_path=str(opts.cloud),
                                         method=opts.method, m=opts.m, n_dense=opts.dense,
                                         seed=opts.seed, out_path=str(opts.out))
        body = uncertainty_op(registry, req).model_dump()
    print(f"H_global = {body['h_global']!r} ({body['method']}, {body['n_points']} points)")


def cmd_explain(opts) -> None:
    from .service import schemas

    if opts.server:
        payload = {"model_id": Path(opts.model).stem, "cloud_path": str(opts.cloud),
                   "radius_frac": opts.radius_frac, "n_queries": opts.queries,
                   "stride": opts.stride, "seed": opts.seed, "out_path": str(opts.out)}
        body = _post(opts.server, "/explain", payload)
    else:
        from .service.core import explain_op

        registry, model_id = _local_registry(opts.model)
        req = schemas.ExplainRequest(model_id=model_id, cloud_path=str(opts.cloud),
                                     radius_frac=opts.radius_frac, n_queries=opts.queries,
                                     stride=opts.stride, seed=opts.seed, out_path=str(opts.out))
        body = explain_op(registry, req).model_dump()
    print(f"mean score {body['mean_score']:.4f} over {body['n_points']} points -> {body['out_path']}")


def cmd_serve(opts) -> None:
    import uvicorn

    from .service.app import create_app
    from .service.core import ModelRegistry

    registry = ModelRegistry()
    if opts.model:
        model_id = registry.load(opts.model)
        print(f"preloaded model {model_id}")
    uvicorn.run(create_app(registry), host=opts.host, port=int(opts.port))


if __name__ == "__main__":
    sys.exit(main())
