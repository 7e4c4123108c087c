"""Transformer motion encoder: joint embedding, sinusoidal positions,
pre-norm attention blocks, pose projection head, and auto-regressive rollout.

Each token is one whole pose (3N values); the head reads the final
time-step's representation, so a forward pass predicts exactly one future
frame. Multi-frame forecasts come from ``rollout``, which slides the window
over the model's own predictions.

There is deliberately no causal mask: the encoder only ever sees a fully
observed window, never future targets, so masking would not hide anything.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np

from . import checkpoint, tensor
from .errors import ConfigurationError, ContractError
from .skeleton import Pose
from .tensor import Tensor, no_grad


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int  # 3N
    num_layers: int = 4
    num_heads: int = 4
    model_dim: int = 64
    ff_dim: int = 128
    history_len: int = 50
    predict_delta: bool = False

    def __post_init__(self):
        for name in ("input_dim", "num_layers", "num_heads", "model_dim", "ff_dim", "history_len"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.model_dim % self.num_heads != 0:
            raise ConfigurationError(
                f"model_dim {self.model_dim} must be divisible by num_heads {self.num_heads}"
            )


def positional_encoding(length: int, model_dim: int) -> np.ndarray:
    """Sinusoidal code: (p, 2i) -> sin(p / 10000^(2i/D)), (p, 2i+1) -> cos(same)."""
    if length < 1:
        raise ContractError(f"length must be >= 1, got {length}")
    positions = np.arange(length)[:, None]
    i = np.arange(0, model_dim, 2)[None, :]
    angles = positions / np.power(10000.0, i / model_dim)
    pe = np.zeros((length, model_dim))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : pe[:, 1::2].shape[1]])
    return pe


class Linear:
    """x @ W + b with uniform +-sqrt(6/(fan_in+fan_out)) init."""

    def __init__(self, fan_in: int, fan_out: int, rng: Optional[np.random.Generator]):
        if rng is None:
            w = np.zeros((fan_in, fan_out))
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        self.W = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(fan_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b

    def params(self):
        return [self.W, self.b]


class LayerNorm:
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return tensor.layer_norm(x, self.gain, self.bias, eps=self.eps)

    def params(self):
        return [self.gain, self.bias]


class EncoderLayer:
    """Pre-norm residual block: x + MHA(LN(x)), then + FF(LN(.))."""

    def __init__(self, cfg: EncoderConfig, rng):
        d = cfg.model_dim
        self.num_heads = cfg.num_heads
        self.head_dim = d // cfg.num_heads
        self.ln1 = LayerNorm(d)
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng)
        self.ln2 = LayerNorm(d)
        self.ff1 = Linear(d, cfg.ff_dim, rng)
        self.ff2 = Linear(cfg.ff_dim, d, rng)

    def _split_heads(self, x: Tensor) -> Tensor:
        # (..., T, D) -> (..., H, T, dk)
        shape = x.shape[:-1] + (self.num_heads, self.head_dim)
        return x.reshape(shape).swapaxes(-3, -2)

    def attention(self, x: Tensor, collect=None) -> Tensor:
        h = self.ln1(x)
        q = self._split_heads(self.wq(h))
        k = self._split_heads(self.wk(h))
        v = self._split_heads(self.wv(h))
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.head_dim))
        probs = tensor.softmax(scores, axis=-1)
        if collect is not None:
            collect.append(probs.data)
        ctx = probs @ v  # (..., H, T, dk)
        merged = ctx.swapaxes(-3, -2)
        merged = merged.reshape(merged.shape[:-2] + (self.num_heads * self.head_dim,))
        return self.wo(merged)

    def __call__(self, x: Tensor, collect=None) -> Tensor:
        x = x + self.attention(x, collect=collect)
        return x + self.ff2(tensor.relu(self.ff1(self.ln2(x))))

    def params(self):
        out = self.ln1.params()
        for lin in (self.wq, self.wk, self.wv, self.wo):
            out += lin.params()
        out += self.ln2.params()
        out += self.ff1.params() + self.ff2.params()
        return out


class EncoderModel:
    """Parameter container plus the windowed forward pass."""

    def __init__(self, config: EncoderConfig, rng: Optional[np.random.Generator]):
        self.config = config
        self.embed = Linear(config.input_dim, config.model_dim, rng)
        self.layers = [EncoderLayer(config, rng) for _ in range(config.num_layers)]
        self.head = Linear(config.model_dim, config.input_dim, rng)
        self._pe = Tensor(positional_encoding(config.history_len, config.model_dim))

    def parameters(self) -> List[Tensor]:
        """Canonical order; also the checkpoint serialization order."""
        out = self.embed.params()
        for layer in self.layers:
            out += layer.params()
        out += self.head.params()
        return out

    def forward_window(self, x: Tensor, collect_attention=None) -> Tensor:
        """(..., T, 3N) observed window -> (..., 3N) next-frame prediction."""
        cfg = self.config
        if x.ndim < 2 or x.shape[-1] != cfg.input_dim or x.shape[-2] != cfg.history_len:
            raise ContractError(
                f"expected window (..., {cfg.history_len}, {cfg.input_dim}), got {x.shape}"
            )
        h = self.embed(x) + self._pe
        for layer in self.layers:
            h = layer(h, collect=collect_attention)
        last = h[..., -1:, :]  # keep rank for the head projection
        out = self.head(last)[..., 0, :]
        if cfg.predict_delta:
            out = out + x[..., -1, :]
        return out


def init_encoder(config: EncoderConfig, seed: int = 0) -> EncoderModel:
    return EncoderModel(config, np.random.default_rng(seed))


def _history_tensor(model: EncoderModel, history) -> Tensor:
    arr = np.asarray(history, dtype=np.float64)
    t = model.config.history_len
    if arr.ndim != 3 or arr.shape[0] != t or arr.shape[1] * arr.shape[2] != model.config.input_dim:
        raise ContractError(
            f"history must be ({t}, N, 3) with 3N = {model.config.input_dim}, got {arr.shape}"
        )
    return Tensor(arr.reshape(t, model.config.input_dim))


def predict_next(model: EncoderModel, history) -> Pose:
    """Predict the pose at frame T+1 from exactly T observed frames."""
    n = model.config.input_dim // 3
    with no_grad():
        out = model.forward_window(_history_tensor(model, history))
    return Pose(out.data.reshape(n, 3))


def rollout_graph(model: EncoderModel, window: Tensor, l_frames: int) -> Tensor:
    """Differentiable sliding-window rollout: (..., T, 3N) -> (..., L, 3N).

    Each predicted frame re-enters the window, so gradients flow through
    the whole chain of forward passes.
    """
    if l_frames < 1:
        raise ContractError(f"l_frames must be >= 1, got {l_frames}")
    steps = []
    for _ in range(l_frames):
        pred = model.forward_window(window)  # (..., 3N)
        steps.append(pred)
        frame = pred.reshape(pred.shape[:-1] + (1, pred.shape[-1]))
        window = tensor.concat([window[..., 1:, :], frame], axis=-2)
    return tensor.stack(steps, axis=-2)


def rollout(model: EncoderModel, history, l_frames: int) -> np.ndarray:
    """Forecast l_frames future poses, (L, N, 3)."""
    n = model.config.input_dim // 3
    with no_grad():
        out = rollout_graph(model, _history_tensor(model, history), l_frames)
    return out.data.reshape(l_frames, n, 3)


def save_checkpoint(model: EncoderModel, path):
    checkpoint.save(path, "encoder", asdict(model.config), model.parameters())


def load_checkpoint(path) -> EncoderModel:
    config, flat = checkpoint.load(path, "encoder")
    model = EncoderModel(EncoderConfig(**config), rng=None)
    checkpoint.fill_params(path, model.parameters(), flat)
    return model
