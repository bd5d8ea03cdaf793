"""Atenção cruzada padrão, atenção cruzada consciente de colunas (CACA) e injeção 3D.

Os mapas de características chegam como ``(B, C, h, w)`` e são achatados em
tokens row-major ``(B, h*w, C)``; o token ``i`` fica na coluna ``i mod w``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from ..engine import functional as F
from ..engine.nn import Conv2d, GroupNorm, Linear, Module, Parameter
from ..engine.tensor import Tensor, as_tensor
from ..errors import ShapeError, UsageError
from ..models.config import CACAConfig


@lru_cache(maxsize=64)
def column_bias(h: int, w: int, sigma: float) -> np.ndarray:
    """Matriz ``N x N`` com ``-(col(i) - col(j))^2 / (2 sigma^2)``; somente leitura."""
    if h < 1 or w < 1:
        raise ShapeError("column_bias", (h, w), detail="grid sides must be >= 1")
    if not sigma > 0:
        raise UsageError(f"column_bias: sigma must be > 0, got {sigma}")
    cols = np.arange(h * w) % w
    delta = (cols[:, None] - cols[None, :]).astype(np.float64)
    if math.isinf(sigma):
        bias = np.zeros_like(delta)
    else:
        bias = -(delta**2) / (2.0 * sigma**2)
    bias = bias.astype(np.float32)
    bias.setflags(write=False)
    return bias


def grid_to_tokens(x: Tensor) -> Tensor:
    batch, channels = x.shape[:2]
    return F.transpose(F.reshape(x, (batch, channels, -1)), (0, 2, 1))


def tokens_to_grid(tokens: Tensor, h: int, w: int) -> Tensor:
    batch, _, channels = tokens.shape
    return F.reshape(F.transpose(tokens, (0, 2, 1)), (batch, channels, h, w))


def split_heads(tokens: Tensor, heads: int) -> Tensor:
    """``(B, N, C) -> (B, heads, N, C/heads)``."""
    batch, count, channels = tokens.shape
    if channels % heads:
        raise ShapeError("split_heads", tokens.shape, (heads,), detail="channels not divisible by heads")
    return F.transpose(F.reshape(tokens, (batch, count, heads, channels // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    batch, heads, count, head_dim = x.shape
    return F.reshape(F.transpose(x, (0, 2, 1, 3)), (batch, count, heads * head_dim))


def attention_weights(q: Tensor, k: Tensor, bias: Optional[np.ndarray] = None) -> Tensor:
    """``softmax(Q K^T / sqrt(d_k) + bias)`` sobre o eixo das chaves."""
    q, k = as_tensor(q), as_tensor(k)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError("attention", q.shape, k.shape, detail="d_k mismatch")
    logits = F.scale(F.matmul(q, F.transpose(k, _swap_last(k.ndim))), 1.0 / math.sqrt(q.shape[-1]))
    if bias is not None:
        if bias.shape != logits.shape[-2:]:
            raise ShapeError("attention bias", logits.shape, bias.shape)
        logits = F.add(logits, Tensor(bias))
    return F.softmax(logits, axis=-1)


def _swap_last(ndim: int) -> Tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def standard_cross_attention(q, k, v) -> Tensor:
    """``softmax(Q K^T / sqrt(d_k)) V`` com Q: ``(..., N_q, d)``, K/V: ``(..., N_k, d)``."""
    k, v = as_tensor(k), as_tensor(v)
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError("standard_cross_attention", k.shape, v.shape, detail="key/value count mismatch")
    return F.matmul(attention_weights(q, k), v)


def biased_cross_attention(q, k, v, bias: Optional[np.ndarray]) -> Tensor:
    return F.matmul(attention_weights(q, k, bias), as_tensor(v))


class CrossAttentionWeights(Module):
    """Projeções W_Q, W_K, W_V (e a de saída, opcional) de largura ``c x c``."""

    def __init__(self, channels: int, rng: np.random.Generator, output_projection: bool = True) -> None:
        self.channels = channels
        self.to_q = Linear(channels, channels, rng)
        self.to_k = Linear(channels, channels, rng)
        self.to_v = Linear(channels, channels, rng)
        self.to_out = Linear(channels, channels, rng) if output_projection else None

    def project(self, target_tokens: Tensor, source_tokens: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        for tokens in (target_tokens, source_tokens):
            if tokens.shape[-1] != self.channels:
                raise ShapeError("cross_attention", tokens.shape, (self.channels,), detail="channel mismatch")
        return self.to_q(target_tokens), self.to_k(source_tokens), self.to_v(source_tokens)


def _check_grids(f_tar: Tensor, f_ref: Tensor) -> None:
    if f_tar.ndim != 4 or f_tar.shape != f_ref.shape:
        raise ShapeError("caca", f_tar.shape, f_ref.shape, detail="target and reference grids must match")


def _caca_bias(f_tar: Tensor, config: CACAConfig) -> Optional[np.ndarray]:
    if not config.use_column_bias:
        return None
    return column_bias(f_tar.shape[2], f_tar.shape[3], config.sigma)


def caca_weights(f_tar, f_ref, weights: CrossAttentionWeights, config: CACAConfig) -> Tensor:
    """Pesos de atenção ``(B, heads, N, N)`` da CACA, para inspeção."""
    f_tar, f_ref = as_tensor(f_tar), as_tensor(f_ref)
    _check_grids(f_tar, f_ref)
    q, k, _ = weights.project(grid_to_tokens(f_tar), grid_to_tokens(f_ref))
    return attention_weights(split_heads(q, config.heads), split_heads(k, config.heads), _caca_bias(f_tar, config))


def caca(f_tar, f_ref, weights: CrossAttentionWeights, config: CACAConfig) -> Tensor:
    """Q do alvo, K/V da referência, viés de coluna somado antes do softmax; volta ao grid do alvo."""
    f_tar, f_ref = as_tensor(f_tar), as_tensor(f_ref)
    _check_grids(f_tar, f_ref)
    h, w = f_tar.shape[2:]
    q, k, v = weights.project(grid_to_tokens(f_tar), grid_to_tokens(f_ref))
    heads = config.heads
    attended = biased_cross_attention(
        split_heads(q, heads), split_heads(k, heads), split_heads(v, heads), _caca_bias(f_tar, config)
    )
    out = merge_heads(attended)
    if weights.to_out is not None:
        out = weights.to_out(out)
    return tokens_to_grid(out, h, w)


class CACABlock(Module):
    def __init__(self, channels: int, groups: int, config: CACAConfig, rng: np.random.Generator) -> None:
        self.config = config
        self.norm_tar = GroupNorm(groups, channels)
        self.norm_ref = GroupNorm(groups, channels)
        self.attention = CrossAttentionWeights(channels, rng)

    def forward(self, f_tar: Tensor, f_ref: Tensor) -> Tensor:
        attended = caca(self.norm_tar(f_tar), self.norm_ref(f_ref), self.attention, self.config)
        return F.add(f_tar, attended)


class ZeroConv2d(Conv2d):
    """Convolução 1x1 com pesos e bias iniciados em zero."""

    def __init__(self, channels: int) -> None:
        self.stride = 1
        self.padding = 0
        self.weight = Parameter(np.zeros((channels, channels, 1, 1), dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))


def pool_depth(volume: Tensor, slabs: int) -> Tensor:
    """Média ao longo de D em ``slabs`` fatias: ``(B, C, D, h, w) -> (B, C, slabs, h, w)``."""
    batch, channels, depth, h, w = volume.shape
    if depth % slabs:
        raise ShapeError("pool_depth", volume.shape, (slabs,), detail="depth not divisible by slabs")
    return F.mean(F.reshape(volume, (batch, channels, slabs, depth // slabs, h, w)), axis=3)


class Inject3D(Module):
    """``f_CACA + ZeroConv(Attention(f_CACA, f_3D, f_3D))`` com projeções próprias."""

    def __init__(self, channels: int, heads: int, depth_slabs: int, rng: np.random.Generator) -> None:
        self.channels = channels
        self.heads = heads
        self.depth_slabs = depth_slabs
        self.attention = CrossAttentionWeights(channels, rng, output_projection=False)
        self.zero_conv = ZeroConv2d(channels)

    def forward(self, f_caca: Tensor, f_3d: Tensor) -> Tensor:
        f_caca, f_3d = as_tensor(f_caca), as_tensor(f_3d)
        if f_3d.ndim != 5 or f_3d.shape[1] != self.channels or f_caca.shape[1] != self.channels:
            raise ShapeError("inject_3d", f_caca.shape, f_3d.shape, detail=f"expected {self.channels} channels")
        if f_3d.shape[0] != f_caca.shape[0] or f_3d.shape[3:] != f_caca.shape[2:]:
            raise ShapeError("inject_3d", f_caca.shape, f_3d.shape, detail="batch or grid mismatch")
        h, w = f_caca.shape[2:]
        pooled = pool_depth(f_3d, self.depth_slabs)
        volume_tokens = F.transpose(F.reshape(pooled, (pooled.shape[0], self.channels, -1)), (0, 2, 1))
        q, k, v = self.attention.project(grid_to_tokens(f_caca), volume_tokens)
        attended = standard_cross_attention(
            split_heads(q, self.heads), split_heads(k, self.heads), split_heads(v, self.heads)
        )
        gated = self.zero_conv(tokens_to_grid(merge_heads(attended), h, w))
        return F.add(f_caca, gated)


def inject_3d(f_caca, f_3d, module: Inject3D) -> Tensor:
    return module(f_caca, f_3d)
