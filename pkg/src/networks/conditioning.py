from __future__ import annotations

import math

import numpy as np

from ..engine import functional as F
from ..engine.nn import Embedding, Linear, Module
from ..engine.tensor import Tensor

NULL_DIRECTION = 2


def timestep_embedding(t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Embedding senoidal ``(B, dim)``: metade seno, metade cosseno."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half, dtype=np.float64) / max(1, half))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=-1)
    return emb.astype(np.float32)


class ConditionEmbedder(Module):
    """``c_emb = t_emb + d_emb``; a linha 2 da tabela de direções é a condição nula."""

    def __init__(self, time_dim: int, emb_dim: int, rng: np.random.Generator) -> None:
        self.time_dim = time_dim
        self.time_in = Linear(time_dim, emb_dim, rng)
        self.time_out = Linear(emb_dim, emb_dim, rng)
        self.direction = Embedding(3, emb_dim, rng)

    def time_embedding(self, t) -> Tensor:
        raw = Tensor(timestep_embedding(t, self.time_dim))
        return self.time_out(F.silu(self.time_in(raw)))

    def forward(self, t, d, null=None) -> Tensor:
        d = np.atleast_1d(np.asarray(d, dtype=np.int64))
        rows = d if null is None else np.where(np.atleast_1d(np.asarray(null, dtype=bool)), NULL_DIRECTION, d)
        t_emb = self.time_embedding(t)
        return F.add(t_emb, self.direction(rows))
