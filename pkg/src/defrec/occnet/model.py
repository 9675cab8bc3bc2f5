"""Conditioned occupancy network: order-invariant cloud encoder, sinusoidal
query encoding, and a decoder MLP with class-logit and signed-distance heads.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..errors import CheckpointError, CloudTooSmallError, ShapeMismatchError
from .encoding import ENCODING_DIM, encode_query_f32

CHECKPOINT_VERSION = 1
MIN_CLOUD_POINTS = 16
_FEATURE_CHUNK = 512


@dataclass
class ModelConfig:
    n_classes: int  # segment count C; the decoder emits C+1 logits plus one distance
    latent_dim: int = 256
    encoder_widths: tuple = (64, 128)
    decoder_widths: tuple = (512, 512, 512)
    dropout: float = 0.2
    lambda_sd: float = 100.0
    seed: int = 0
    normalization: dict = field(default_factory=lambda: {"kind": "cloud-bbox-to-unit-cube"})

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "latent_dim": self.latent_dim,
            "encoder_widths": list(self.encoder_widths),
            "decoder_widths": list(self.decoder_widths),
            "dropout": self.dropout,
            "lambda_sd": self.lambda_sd,
            "seed": self.seed,
            "normalization": self.normalization,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(
            n_classes=d["n_classes"],
            latent_dim=d["latent_dim"],
            encoder_widths=tuple(d["encoder_widths"]),
            decoder_widths=tuple(d["decoder_widths"]),
            dropout=d["dropout"],
            lambda_sd=d["lambda_sd"],
            seed=d.get("seed", 0),
            normalization=d.get("normalization", {}),
        )


class OccupancyModel:
    """Encoder E (shared per-point MLP + max pool) and decoder MLP heads."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.meta: dict = {}
        rng = rng or np.random.default_rng(config.seed)
        enc_layers = []
        w_prev = 3
        for w in config.encoder_widths:
            enc_layers.append(nn.Dense(w_prev, w, activation="relu", rng=rng))
            w_prev = w
        enc_layers.append(nn.Dense(w_prev, config.latent_dim, activation="none", rng=rng))
        self.encoder = nn.Sequential(enc_layers)

        dec_layers = []
        w_prev = config.latent_dim + ENCODING_DIM
        for w in config.decoder_widths:
            dec_layers.append(nn.Dense(w_prev, w, activation="relu", rng=rng))
            if config.dropout > 0:
                dec_layers.append(nn.Dropout(config.dropout))
            w_prev = w
        dec_layers.append(nn.Dense(w_prev, config.n_classes + 2, activation="none", rng=rng))
        self.decoder = nn.Sequential(dec_layers)

    # -- properties -----------------------------------------------------------

    @property
    def n_classes(self) -> int:
        return self.config.n_classes

    @property
    def dropout_rate(self) -> float:
        return self.config.dropout

    @property
    def params(self):
        return self.encoder.params + self.decoder.params

    def decoder_input_dim(self) -> int:
        return self.config.latent_dim + ENCODING_DIM

    # -- inference ------------------------------------------------------------

    def point_features(self, points_norm: np.ndarray) -> np.ndarray:
        """Per-point encoder features, computed in fixed-shape padded chunks.

        BLAS results for a row can differ in the last ulp when the matrix
        height changes, which would break exact duplicate-invariance of the
        pooled latent; fixed (chunk, k) shapes make each point's feature a
        function of that point alone.
        """
        x = np.ascontiguousarray(points_norm, dtype=np.float32)
        if x.ndim != 2 or x.shape[1] != 3:
            raise ShapeMismatchError(f"cloud must be (n, 3), got {x.shape}")
        n = len(x)
        chunk = _FEATURE_CHUNK
        out = np.empty((n, self.config.latent_dim), dtype=np.float32)
        for s in range(0, n, chunk):
            block = x[s : s + chunk]
            if len(block) < chunk:
                padded = np.zeros((chunk, 3), dtype=np.float32)
                padded[: len(block)] = block
                feats, _ = self.encoder.forward(padded)
                out[s : s + chunk] = feats[: len(block)]
            else:
                feats, _ = self.encoder.forward(block)
                out[s : s + chunk] = feats
        return out

    def encode_cloud(self, points_norm: np.ndarray) -> np.ndarray:
        """Latent vector; exactly permutation- and duplicate-invariant (max pool)."""
        if len(points_norm) < MIN_CLOUD_POINTS:
            raise CloudTooSmallError(f"need >= {MIN_CLOUD_POINTS} points, got {len(points_norm)}")
        return self.point_features(points_norm).max(axis=0)

    def decode(self, latent: np.ndarray, queries_norm: np.ndarray, mode: str = "eval",
               rng: np.random.Generator | None = None, chunk: int = 32768):
        """Per-query (logits over C+1 classes, signed distance)."""
        m = len(queries_norm)
        logits = np.empty((m, self.config.n_classes + 1), dtype=np.float32)
        sdist = np.empty(m, dtype=np.float32)
        lat = latent.astype(np.float32)
        for s in range(0, m, chunk):
            q = queries_norm[s : s + chunk]
            x = np.empty((len(q), self.decoder_input_dim()), dtype=np.float32)
            x[:, : self.config.latent_dim] = lat
            encode_query_f32(q, out=x[:, self.config.latent_dim :])
            y, _ = self.decoder.forward(x, mode=mode, rng=rng)
            logits[s : s + chunk] = y[:, :-1]
            sdist[s : s + chunk] = y[:, -1]
        return logits, sdist

    def predict(self, points_norm: np.ndarray, queries_norm: np.ndarray, mode: str = "eval",
                rng: np.random.Generator | None = None):
        """One cloud encoding plus a batched decoder pass over the queries."""
        queries_norm = np.atleast_2d(queries_norm)
        if len(queries_norm) == 0:
            return np.zeros((0, self.config.n_classes + 1), dtype=np.float32), np.zeros(0, dtype=np.float32)
        latent = self.encode_cloud(points_norm)
        return self.decode(latent, queries_norm, mode=mode, rng=rng)

    # -- persistence ----------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        arrays = {}
        for i, p in enumerate(self.encoder.params):
            arrays[f"enc_{i}"] = p.value
        for i, p in enumerate(self.decoder.params):
            arrays[f"dec_{i}"] = p.value
        meta = {"version": CHECKPOINT_VERSION, "config": self.config.to_dict()}
        if extra_meta:
            meta["extra"] = extra_meta
        arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
        _write_npz_deterministic(path, arrays)

    @classmethod
    def load(cls, path) -> "OccupancyModel":
        try:
            with np.load(path, allow_pickle=False) as data:
                if "meta" not in data:
                    raise CheckpointError(f"{path}: missing metadata")
                meta = json.loads(bytes(data["meta"]).decode("utf-8"))
                if meta.get("version") != CHECKPOINT_VERSION:
                    raise CheckpointError(
                        f"{path}: checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}"
                    )
                model = cls(ModelConfig.from_dict(meta["config"]))
                model.meta = meta
                for i, p in enumerate(model.encoder.params):
                    _assign(p, data[f"enc_{i}"], path)
                for i, p in enumerate(model.decoder.params):
                    _assign(p, data[f"dec_{i}"], path)
        except (zipfile.BadZipFile, OSError, KeyError, ValueError, json.JSONDecodeError) as err:
            raise CheckpointError(f"{path}: corrupt or truncated checkpoint ({err})") from err
        return model


def _write_npz_deterministic(path, arrays: dict) -> None:
    """npz-compatible container with fixed zip timestamps: identical models
    produce byte-identical checkpoints."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def _assign(param: nn.Param, value: np.ndarray, path) -> None:
    if param.value.shape != value.shape:
        raise CheckpointError(f"{path}: parameter shape {value.shape} != {param.value.shape}")
    param.value = value.copy()
    param.grad = np.zeros_like(param.value)


def combined_loss(logits: np.ndarray, sd_pred: np.ndarray, labels: np.ndarray,
                  sd_true: np.ndarray, lambda_sd: float):
    """L = mean cross-entropy + lambda * mean L1 signed-distance error.

    Returns (total, ce, l1, dlogits, dsd).
    """
    ce, dlogits = nn.cross_entropy(logits, labels)
    l1, dsd = nn.l1_loss(sd_pred, sd_true.astype(sd_pred.dtype))
    return ce + lambda_sd * l1, ce, l1, dlogits, dsd * np.float32(lambda_sd)
