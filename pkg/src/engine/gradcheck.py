"""Checagem de gradientes por diferenças finitas centrais."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor, precision


def check_gradients(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-3,
    entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Maior erro relativo entre o gradiente analítico e o numérico.

    ``fn`` reconstrói o grafo a cada chamada a partir de ``tensors``. A
    comparação roda em float64; os dados originais são restaurados no fim.
    Com ``entries`` apenas essa quantidade de posições (sorteadas) por
    tensor é verificada.
    """
    originals = [t.data for t in tensors]
    worst = 0.0
    try:
        with precision(np.float64):
            for t in tensors:
                t.data = np.array(t.data, dtype=np.float64)
                t.grad = None
            fn().backward()
            for t in tensors:
                analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
                flat = t.data.reshape(-1)
                if entries is None or entries >= flat.size:
                    indices = np.arange(flat.size)
                else:
                    picker = rng if rng is not None else np.random.default_rng(0)
                    indices = picker.choice(flat.size, size=entries, replace=False)
                numeric = np.empty(len(indices))
                for k, index in enumerate(indices):
                    original = flat[index]
                    flat[index] = original + h
                    plus = fn().item()
                    flat[index] = original - h
                    minus = fn().item()
                    flat[index] = original
                    numeric[k] = (plus - minus) / (2.0 * h)
                picked = analytic.reshape(-1)[indices]
                scale = max(np.linalg.norm(picked), np.linalg.norm(numeric), 1e-12)
                worst = max(worst, float(np.linalg.norm(picked - numeric) / scale))
    finally:
        for t, data in zip(tensors, originals):
            t.data = data
            t.grad = None
    return worst
