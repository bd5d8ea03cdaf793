from __future__ import annotations

import re
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import CA3DError, ShapeError, UsageError
from .container import atomic_write_bytes

_PGM_HEADER = re.compile(rb"\AP5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def normalize_truncation(
    image: np.ndarray,
    p_lo: float = 1.0,
    p_hi: float = 99.0,
    mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Normalização por truncamento: corta nos percentis dos pixels da mama e reescala para [0, 1].

    Os percentis são calculados sobre ``mask`` (por padrão, os pixels não
    nulos). O fundo continua 0; uma faixa degenerada (v_lo == v_hi) leva
    todos os pixels da máscara a 0.
    """
    if not 0.0 <= p_lo < p_hi <= 100.0:
        raise UsageError(f"normalize_truncation: need 0 <= p_lo < p_hi <= 100, got {p_lo}, {p_hi}")
    image = np.asarray(image)
    mask = image != 0 if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != image.shape:
        raise ShapeError("normalize_truncation", image.shape, mask.shape)
    if not mask.any():
        return image.astype(np.float32, copy=True)

    values = image[mask].astype(np.float64)
    v_lo, v_hi = np.percentile(values, [p_lo, p_hi])
    out = np.zeros(image.shape, dtype=np.float64)
    if v_hi > v_lo:
        out[mask] = (np.clip(values, v_lo, v_hi) - v_lo) / (v_hi - v_lo)
    return out.astype(np.float32)


def avg_pool2d(image: np.ndarray, factor: int) -> np.ndarray:
    """Média em blocos ``factor x factor`` sobre os dois últimos eixos."""
    if factor == 1:
        return np.asarray(image)
    *lead, height, width = image.shape
    if height % factor or width % factor:
        raise ShapeError("avg_pool2d", image.shape, (factor, factor))
    blocks = image.reshape(*lead, height // factor, factor, width // factor, factor)
    return blocks.mean(axis=(-3, -1))


# ---------------------------------------------------------------------- #
#  PGM (P5)                                                              #
# ---------------------------------------------------------------------- #


def encode_pgm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ShapeError("encode_pgm", image.shape, detail="expected (H, W)")
    height, width = image.shape
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    match = _PGM_HEADER.match(data)
    if match is None:
        raise CA3DError("not a binary PGM (P5) image")
    width, height, maxval = (int(group) for group in match.groups())
    if not 0 < maxval < 65536:
        raise CA3DError(f"PGM maxval {maxval} out of range")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    body = data[match.end() :]
    expected = width * height * dtype.itemsize
    if len(body) < expected:
        raise CA3DError(f"PGM payload truncated: {len(body)} of {expected} bytes")
    pixels = np.frombuffer(body[:expected], dtype=dtype).reshape(height, width)
    return (pixels.astype(np.float64) / maxval).astype(np.float32)


def write_pgm(path: Union[str, Path], image: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pgm(image))


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
