"""Geradores pseudoaleatórios reprodutíveis.

Todo o código usa ``numpy.random.Philox`` (gerador baseado em contador,
64 bits) para que as sementes produzam os mesmos fluxos em qualquer máquina.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & MASK64))


def derive_seed(seed: int, index: int) -> int:
    """Semente por amostra: ``seed XOR index``."""
    return (int(seed) ^ int(index)) & MASK64
