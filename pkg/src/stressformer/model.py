"""Patch-transformer classifier for single-channel signal windows.

Pipeline: non-overlapping patch creation -> linear patch embedding ->
fixed sinusoidal positional encoding -> pre-norm attention blocks
(multi-head self-attention + ReLU feed-forward, residual) -> mean pooling
over patches (the embedding tap used by all downstream analysis) ->
dense softmax head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError, UsageError
from .util import STREAM_DROPOUT, STREAM_INIT, rng_stream


@dataclass(frozen=True)
class ModelConfig:
    window_len: int
    patch_len: int
    d_model: int = 64
    n_heads: int = 4
    n_blocks: int = 2
    ff_dim: int = 128
    dropout_rate: float = 0.1
    n_classes: int = 3
    positional_encoding: bool = True

    def __post_init__(self):
        for name in ("window_len", "patch_len", "d_model", "n_heads", "n_blocks",
                     "ff_dim", "n_classes"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.window_len % self.patch_len != 0:
            raise ConfigError(
                f"window_len {self.window_len} not divisible by patch_len "
                f"{self.patch_len}"
            )
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}"
            )

    @property
    def n_patches(self) -> int:
        return self.window_len // self.patch_len

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "patch_len": self.patch_len,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_blocks": self.n_blocks,
            "ff_dim": self.ff_dim,
            "dropout_rate": self.dropout_rate,
            "n_classes": self.n_classes,
            "positional_encoding": self.positional_encoding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def make_patches(window: np.ndarray, patch_len: int) -> np.ndarray:
    """Split a window into contiguous non-overlapping patches, order kept."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1:
        raise ShapeError(f"expected a 1D window, got shape {window.shape}")
    if window.size % patch_len != 0:
        raise ConfigError(
            f"window length {window.size} not divisible by patch_len {patch_len}"
        )
    return window.reshape(-1, patch_len)


def positional_encoding(n_patches: int, d_model: int) -> np.ndarray:
    """Fixed sinusoidal table: sin on even dims, cos on odd, base 10000."""
    if n_patches <= 0 or d_model <= 0:
        raise ConfigError("positional_encoding dimensions must be positive")
    pos = np.arange(n_patches, dtype=np.float64)[:, None]
    dim = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(dim / 2.0)) / d_model)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return np.ascontiguousarray(table)


class PatchTransformer:
    """Transformer classifier; weights keyed by stable dotted names."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = int(seed)
        self._training: bool | None = None
        self._dropout_rng = rng_stream(self.seed, STREAM_DROPOUT)
        self._posenc = positional_encoding(config.n_patches, config.d_model)
        self.weights: dict[str, T.Tensor] = {}
        self._init_weights(rng_stream(self.seed, STREAM_INIT))

    def _add_weight(self, name: str, data: np.ndarray) -> None:
        self.weights[name] = T.Tensor(data, requires_grad=True)

    def _init_weights(self, rng: np.random.Generator) -> None:
        cfg = self.config

        def dense(shape):
            # uniform scaled by 1/sqrt(fan_in); fan_in = first dim
            bound = 1.0 / np.sqrt(shape[0])
            return rng.uniform(-bound, bound, size=shape)

        self._add_weight("patch_embed.w", dense((cfg.patch_len, cfg.d_model)))
        self._add_weight("patch_embed.b", np.zeros(cfg.d_model))
        for i in range(cfg.n_blocks):
            p = f"block{i}"
            self._add_weight(f"{p}.ln1.gamma", np.ones(cfg.d_model))
            self._add_weight(f"{p}.ln1.beta", np.zeros(cfg.d_model))
            for proj in ("wq", "wk", "wv", "wo"):
                self._add_weight(f"{p}.attn.{proj}", dense((cfg.d_model, cfg.d_model)))
            self._add_weight(f"{p}.ln2.gamma", np.ones(cfg.d_model))
            self._add_weight(f"{p}.ln2.beta", np.zeros(cfg.d_model))
            self._add_weight(f"{p}.ff.w1", dense((cfg.d_model, cfg.ff_dim)))
            self._add_weight(f"{p}.ff.b1", np.zeros(cfg.ff_dim))
            self._add_weight(f"{p}.ff.w2", dense((cfg.ff_dim, cfg.d_model)))
            self._add_weight(f"{p}.ff.b2", np.zeros(cfg.d_model))
        self._add_weight("head.w", dense((cfg.d_model, cfg.n_classes)))
        self._add_weight("head.b", np.zeros(cfg.n_classes))

    @classmethod
    def from_weights(
        cls, config: ModelConfig, weights: dict[str, np.ndarray], seed: int
    ) -> "PatchTransformer":
        model = cls(config, seed)
        if set(weights) != set(model.weights):
            missing = set(model.weights) - set(weights)
            extra = set(weights) - set(model.weights)
            raise ConfigError(
                f"weight names do not match config (missing={sorted(missing)}, "
                f"extra={sorted(extra)})"
            )
        for name, arr in weights.items():
            current = model.weights[name]
            if current.data.shape != arr.shape:
                raise ShapeError(
                    f"weight {name}: stored shape {arr.shape} != expected "
                    f"{current.data.shape}"
                )
            current.data = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        return model

    # mode control: forward requires an explicit choice

    def train(self) -> "PatchTransformer":
        self._training = True
        return self

    def eval(self) -> "PatchTransformer":
        self._training = False
        return self

    @property
    def training(self) -> bool:
        if self._training is None:
            raise UsageError("set train() or eval() mode before calling forward")
        return self._training

    def parameters(self) -> dict[str, T.Tensor]:
        return self.weights

    # forward

    def forward_batch(
        self, windows: np.ndarray, capture: dict | None = None
    ) -> tuple[T.Tensor, T.Tensor]:
        """(logits [B, n_classes], pooled embedding [B, d_model])."""
        training = self.training
        cfg = self.config
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 1:
            windows = windows[None, :]
        if windows.ndim != 2 or windows.shape[1] != cfg.window_len:
            raise ShapeError(
                f"expected windows of shape [batch, {cfg.window_len}], "
                f"got {windows.shape}"
            )
        b = windows.shape[0]
        n, p, d = cfg.n_patches, cfg.patch_len, cfg.d_model

        x = T.Tensor(windows)
        h = T.matmul(x.reshape(b * n, p), self.weights["patch_embed.w"])
        h = T.add(h, self.weights["patch_embed.b"]).reshape(b, n, d)
        if cfg.positional_encoding:
            h = T.add(h, T.Tensor(self._posenc))
        for i in range(cfg.n_blocks):
            h = self._block(h, i, b, training, capture)
        embedding = h.mean(axis=1)
        logits = T.add(
            T.matmul(embedding, self.weights["head.w"]), self.weights["head.b"]
        )
        return logits, embedding

    def forward(self, window: np.ndarray) -> tuple[T.Tensor, T.Tensor]:
        """Single-window forward; probabilities are softmax(logits)."""
        window = np.asarray(window, dtype=np.float64)
        if window.ndim != 1 or window.size != self.config.window_len:
            raise ShapeError(
                f"expected a window of length {self.config.window_len}, "
                f"got shape {window.shape}"
            )
        logits, embedding = self.forward_batch(window[None, :])
        return logits.reshape(self.config.n_classes), embedding.reshape(
            self.config.d_model
        )

    def _block(
        self,
        h: T.Tensor,
        idx: int,
        b: int,
        training: bool,
        capture: dict | None,
    ) -> T.Tensor:
        cfg = self.config
        n, d, nh, hd = cfg.n_patches, cfg.d_model, cfg.n_heads, cfg.head_dim
        w = self.weights
        pre = f"block{idx}"

        # y = h + MHSA(LN(h))
        normed = T.layer_norm(h, w[f"{pre}.ln1.gamma"], w[f"{pre}.ln1.beta"])
        flat = normed.reshape(b * n, d)

        def heads(name):
            proj = T.matmul(flat, w[f"{pre}.attn.{name}"])
            return proj.reshape(b, n, nh, hd).transpose((0, 2, 1, 3)).reshape(
                b * nh, n, hd
            )

        q, k, v = heads("wq"), heads("wk"), heads("wv")
        scores = T.scale(T.matmul(q, k.transpose((0, 2, 1))), 1.0 / np.sqrt(hd))
        attn = T.softmax(scores, axis=-1)
        context = T.matmul(attn, v)
        merged = context.reshape(b, nh, n, hd).transpose((0, 2, 1, 3)).reshape(
            b * n, d
        )
        if capture is not None:
            capture.setdefault("attn", []).append(attn.data.copy())
            capture.setdefault("context", []).append(
                merged.data.reshape(b, n, d).copy()
            )
        mhsa = T.matmul(merged, w[f"{pre}.attn.wo"]).reshape(b, n, d)
        y = T.add(h, mhsa)

        # z = y + FF(LN(y)); FF = Dense(ff) + ReLU + Dropout + Dense(d)
        normed2 = T.layer_norm(y, w[f"{pre}.ln2.gamma"], w[f"{pre}.ln2.beta"])
        ff = T.add(
            T.matmul(normed2.reshape(b * n, d), w[f"{pre}.ff.w1"]),
            w[f"{pre}.ff.b1"],
        )
        ff = T.relu(ff)
        ff = T.dropout(ff, cfg.dropout_rate, self._dropout_rng, training)
        ff = T.add(T.matmul(ff, w[f"{pre}.ff.w2"]), w[f"{pre}.ff.b2"])
        return T.add(y, ff.reshape(b, n, d))

    # inference helpers (no tape, eval mode)

    def predict(
        self, windows: np.ndarray, batch_size: int = 256
    ) -> tuple[np.ndarray, np.ndarray]:
        """(probabilities [N, n_classes], embeddings [N, d_model]) in eval mode."""
        if self.training:
            raise UsageError("predict requires eval mode")
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 1:
            windows = windows[None, :]
        probs, embs = [], []
        for start in range(0, windows.shape[0], batch_size):
            chunk = windows[start : start + batch_size]
            logits, emb = self.forward_batch(chunk)
            probs.append(T.softmax(logits, axis=1).data)
            embs.append(emb.data)
        return np.concatenate(probs, axis=0), np.concatenate(embs, axis=0)
