"""Mini-batch training of the occupancy network.

Each epoch re-draws the 50% input-point dropout per sample, shuffles, and runs
Adam on the combined loss. Batches concatenate the (ragged) clouds for one
encoder pass; max-pool gradients scatter back through the per-sample argmax.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import nn
from ..deformgen.dataset import TrainingSample, load_dataset, load_manifest
from ..errors import NonFiniteError
from ..util import rng_for
from .encoding import encode_query_f32
from .model import MIN_CLOUD_POINTS, ModelConfig, OccupancyModel, combined_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 40
    epochs: int = 700
    lr: float = 5e-4
    lambda_sd: float = 100.0
    point_drop: float = 0.5
    seed: int = 0
    latent_dim: int = 256
    encoder_widths: tuple = (64, 128)
    decoder_widths: tuple = (512, 512, 512)
    dropout: float = 0.2
    queries_per_sample: int = 0  # 0 = use all ground-truth queries every epoch
    checkpoint_every: int = 0  # 0 = final checkpoint only
    log_every: int = 10
    out_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_sd < 0:
            raise ValueError("lambda_sd must be >= 0")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["encoder_widths"] = list(self.encoder_widths)
        d["decoder_widths"] = list(self.decoder_widths)
        return d


@dataclass
class TrainResult:
    model: OccupancyModel
    history: list  # rows of (epoch, ce, l1, total)
    checkpoint_path: Path | None = None
    curve_path: Path | None = None


class _Batcher:
    """Precomputed float32 views of the dataset for fast batch assembly."""

    def __init__(self, samples: list[TrainingSample]):
        self.clouds = [np.ascontiguousarray(s.cloud.normalized(), dtype=np.float32) for s in samples]
        self.queries = [np.ascontiguousarray(s.queries, dtype=np.float64) for s in samples]
        self.labels = [np.ascontiguousarray(s.labels, dtype=np.int64) for s in samples]
        self.sdists = [np.ascontiguousarray(s.sdists, dtype=np.float32) for s in samples]

    def __len__(self):
        return len(self.clouds)


def train(config: TrainConfig, data_dir) -> TrainResult:
    """Train from a generated dataset directory."""
    manifest = load_manifest(data_dir)
    samples = load_dataset(data_dir)
    return train_on_samples(config, samples, n_classes=manifest["n_classes"],
                            dataset_meta={"dataset": str(data_dir), "config_hash": manifest["config_hash"]})


def train_on_samples(config: TrainConfig, samples: list[TrainingSample], n_classes: int,
                     dataset_meta: dict | None = None) -> TrainResult:
    model_cfg = ModelConfig(
        n_classes=n_classes,
        latent_dim=config.latent_dim,
        encoder_widths=config.encoder_widths,
        decoder_widths=config.decoder_widths,
        dropout=config.dropout,
        lambda_sd=config.lambda_sd,
        seed=config.seed,
    )
    rng = rng_for(config.seed, "train")
    model = OccupancyModel(model_cfg, rng=rng_for(config.seed, "init"))
    data = _Batcher(samples)
    state = nn.AdamState(lr=config.lr)
    params = model.params
    latent_dim = config.latent_dim

    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    history = []
    n = len(data)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        ep_ce = ep_l1 = ep_total = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            try:
                ce, l1, total = _train_batch(model, data, idx, config, params, state, rng, latent_dim)
            except NonFiniteError as err:
                raise NonFiniteError(
                    f"training diverged at epoch {epoch} batch {n_batches} (seed {config.seed}): {err}"
                ) from err
            if not np.isfinite(total):
                raise NonFiniteError(f"NaN loss at epoch {epoch} batch {n_batches} (seed {config.seed})")
            ep_ce += ce
            ep_l1 += l1
            ep_total += total
            n_batches += 1
        history.append((epoch, ep_ce / n_batches, ep_l1 / n_batches, ep_total / n_batches))
        if config.log_every and (epoch % config.log_every == 0 or epoch == 1):
            log.info("epoch %d: ce=%.4f l1=%.5f total=%.4f", epoch, *history[-1][1:])
        if out_dir and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            model.save(out_dir / f"checkpoint_{epoch:05d}.ckpt", extra_meta=_meta(config, dataset_meta, epoch))

    result = TrainResult(model=model, history=history)
    if out_dir:
        result.checkpoint_path = out_dir / "model.ckpt"
        model.save(result.checkpoint_path, extra_meta=_meta(config, dataset_meta, config.epochs))
        result.curve_path = out_dir / "loss_curve.csv"
        write_loss_curve(result.curve_path, history)
    return result


def _meta(config: TrainConfig, dataset_meta, epoch: int) -> dict:
    meta = {"train_config": config.to_dict(), "epoch": epoch}
    if dataset_meta:
        meta.update(dataset_meta)
    return meta


def write_loss_curve(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,ce,l1,total\n")
        for epoch, ce, l1, total in history:
            fh.write(f"{epoch},{ce!r},{l1!r},{total!r}\n")


def _train_batch(model, data, idx, config, params, state, rng, latent_dim):
    """One forward/backward/Adam step over the samples in idx."""
    batch = len(idx)

    # assemble clouds with per-epoch re-drawn point dropout
    kept_clouds = []
    offsets = np.zeros(batch + 1, dtype=np.int64)
    for b, s in enumerate(idx):
        cloud = data.clouds[s]
        keep = max(MIN_CLOUD_POINTS, int(round(len(cloud) * (1.0 - config.point_drop))))
        keep = min(keep, len(cloud))
        sel = np.sort(rng.choice(len(cloud), size=keep, replace=False))
        kept_clouds.append(cloud[sel])
        offsets[b + 1] = offsets[b] + keep
    all_points = np.concatenate(kept_clouds)

    # query subset (regular (batch, mq) grid; every sample has the same count)
    mq_full = len(data.queries[idx[0]])
    if config.queries_per_sample and config.queries_per_sample < mq_full:
        mq = config.queries_per_sample
        q_sel = [np.sort(rng.choice(mq_full, size=mq, replace=False)) for _ in range(batch)]
    else:
        mq = mq_full
        q_sel = [slice(None)] * batch

    q = np.concatenate([data.queries[s][q_sel[b]] for b, s in enumerate(idx)])
    labels = np.concatenate([data.labels[s][q_sel[b]] for b, s in enumerate(idx)])
    sd_true = np.concatenate([data.sdists[s][q_sel[b]] for b, s in enumerate(idx)])

    # encoder forward + per-sample max pool
    feats, enc_caches = model.encoder.forward(all_points)
    latent = np.empty((batch, latent_dim), dtype=np.float32)
    argmax_rows = np.empty((batch, latent_dim), dtype=np.int64)
    for b in range(batch):
        block = feats[offsets[b] : offsets[b + 1]]
        am = block.argmax(axis=0)
        argmax_rows[b] = offsets[b] + am
        latent[b] = block[am, np.arange(latent_dim)]

    # decoder forward on [latent | beta(q)]
    x = np.empty((batch * mq, latent_dim + 60), dtype=np.float32)
    x[:, :latent_dim].reshape(batch, mq, latent_dim)[:] = latent[:, None, :]
    encode_query_f32(q, out=x[:, latent_dim:])
    y, dec_caches = model.decoder.forward(x, mode="train", rng=rng)

    total, ce, l1, dlogits, dsd = combined_loss(y[:, :-1], y[:, -1], labels, sd_true, config.lambda_sd)

    dy = np.empty_like(y)
    dy[:, :-1] = dlogits
    dy[:, -1] = dsd
    model.encoder.zero_grad()
    model.decoder.zero_grad()
    dx = model.decoder.backward(dec_caches, dy)

    # route pooled-latent gradients back to the argmax feature rows
    dlatent = dx[:, :latent_dim].reshape(batch, mq, latent_dim).sum(axis=1)
    dfeats = np.zeros_like(feats)
    cols = np.broadcast_to(np.arange(latent_dim), (batch, latent_dim))
    # (row, col) pairs are unique across the batch, so indexed += is safe
    dfeats[argmax_rows.ravel(), cols.ravel()] += dlatent.ravel()
    model.encoder.backward(enc_caches, dfeats)

    nn.adam_step(params, state)
    return ce, l1, total
