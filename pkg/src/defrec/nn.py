"""Minimal differentiable compute: dense layers, ReLU, inverted dropout,
softmax/cross-entropy and L1 losses, and bias-corrected Adam.

Forward passes are functional (layers hold only parameters; activations live
in per-call caches), so concurrent inference on a frozen stack is safe.
Training accumulates gradients into Param.grad under a single-writer contract.
Parameters default to float32; float64 is supported for finite-difference
gradient verification. Loss reductions accumulate in float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError


class Param:
    """A value array with a same-shaped gradient buffer."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape


class Dense:
    """y = x @ W.T + b, optionally followed by ReLU."""

    def __init__(self, n_in: int, n_out: int, activation: str = "none",
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if activation not in ("none", "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        if activation == "relu":
            bound = np.sqrt(6.0 / n_in)  # He-uniform
        else:
            bound = np.sqrt(6.0 / (n_in + n_out))  # Xavier-uniform for linear heads
        self.W = Param(rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype))
        self.b = Param(np.zeros(n_out, dtype=dtype))
        self.activation = activation

    @property
    def params(self):
        return [self.W, self.b]

    def forward(self, x: np.ndarray):
        if x.shape[1] != self.W.shape[1]:
            raise ShapeMismatchError(f"input has {x.shape[1]} features, layer expects {self.W.shape[1]}")
        y = x @ self.W.value.T + self.b.value
        if self.activation == "relu":
            np.maximum(y, 0, out=y)
        return y, (x, y)

    def backward(self, cache, dy: np.ndarray):
        x, y = cache
        if self.activation == "relu":
            dy = np.where(y > 0, dy, 0)
        self.W.grad += dy.T @ x
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value


class Dropout:
    """Inverted dropout. train/mc: mask and scale by 1/(1-rate); eval: identity.

    mc mode exists so a dropout-sampled forward pass can be replayed exactly
    from an explicit seed (one member of the virtual ensemble).
    """

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    @property
    def params(self):
        return []

    def forward(self, x: np.ndarray, mode: str = "eval", rng: np.random.Generator | None = None):
        if mode == "eval" or self.rate == 0.0:
            return x, None
        if mode not in ("train", "mc"):
            raise ValueError(f"unknown dropout mode {mode!r}")
        if rng is None:
            raise ValueError(f"dropout in {mode!r} mode needs an rng")
        keep = 1.0 - self.rate
        draw_dtype = x.dtype if x.dtype in (np.float32, np.float64) else np.float64
        mask = (rng.random(size=x.shape, dtype=draw_dtype) < keep).astype(x.dtype)
        mask *= np.asarray(1.0 / keep, dtype=x.dtype)
        return x * mask, mask

    def backward(self, cache, dy: np.ndarray):
        if cache is None:
            return dy
        return dy * cache


class Sequential:
    """A stack of Dense/Dropout layers with functional forward/backward."""

    def __init__(self, layers):
        self.layers = list(layers)

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0

    def forward(self, x: np.ndarray, mode: str = "eval", rng: np.random.Generator | None = None):
        caches = []
        for layer in self.layers:
            if isinstance(layer, Dropout):
                x, cache = layer.forward(x, mode=mode, rng=rng)
            else:
                x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, dy: np.ndarray) -> np.ndarray:
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(cache, dy)
        return dy


# ---------------------------------------------------------------------------
# losses


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean -log softmax(logits)[label]; returns (loss, dlogits)."""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"logits {logits.shape} vs labels {labels.shape}")
    if len(labels) and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ShapeMismatchError(
            f"labels must lie in [0, {logits.shape[1] - 1}], got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    n = logits.shape[0]
    p = softmax(logits)
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(p[rows, labels], 1e-45)).astype(np.float64).mean())
    dlogits = p.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def l1_loss(pred: np.ndarray, target: np.ndarray):
    """Mean |pred - target|; subgradient 0 at exact ties. Returns (loss, dpred)."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.abs(diff).astype(np.float64).mean())
    dpred = np.sign(diff) / diff.size
    return loss, dpred.astype(pred.dtype)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def ensure(self, params):
        if not self.m:
            self.m = [np.zeros_like(p.value) for p in params]
            self.v = [np.zeros_like(p.value) for p in params]
        if len(self.m) != len(params):
            raise ShapeMismatchError("optimizer state does not match parameter list")


def adam_step(params, state: AdamState) -> None:
    """One bias-corrected Adam update in place; halts on non-finite gradients."""
    state.ensure(params)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient at step {t} (shape {g.shape})")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p.value -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.value.dtype)


# ---------------------------------------------------------------------------
# finite-difference verification


def numeric_gradient(f, x: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences of a scalar function, one entry at a time."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)
