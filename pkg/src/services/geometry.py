"""Geometria das vistas CC/MLO, retroprojeção e gerador de fantomas.

Convenção de eixos: o volume é guardado como ``(D, H, W)`` indexado por
``[z, y, x]``; ``x`` é a coluna da imagem (parede torácica no maior ``x``),
``y`` a linha e ``z`` a profundidade. Volumes de características têm eixos
extras à esquerda, ``(..., c, D, H, W)``.

A vista MLO é a rotação de 45 graus no plano (y, z) amostrada na própria
grade: o raio da linha ``r`` atravessa os voxels com ``y - z + D//2 == r``.
Cada amostra cai num centro de voxel, então a interpolação bilinear se reduz
à leitura do voxel. Amostras fora do volume contribuem zero, assim como
voxels cuja diagonal cai fora das linhas da imagem. A linha ``r`` corresponde
à coordenada contínua ``u = (y - z)/sqrt(2)`` por ``r = sqrt(2)·u + D//2``.

A projeção faz a média das ``D`` amostras do raio e a retroprojeção replica o
pixel nos voxels do raio, logo ``⟨P v, i⟩ = (1/D)·⟨v, B i⟩`` vale sempre. A
ida e volta ``P(B(i))`` devolve ``i`` multiplicada pela fração do raio dentro
do volume (``ray_coverage``), que é 1 em toda a vista CC.
"""

from __future__ import annotations

import enum
import logging
import math
from functools import cached_property
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..engine.rng import make_rng
from ..errors import GeometryError, ShapeError
from ..models.config import PhantomSpec
from ..models.records import ViewPair
from .imaging import normalize_truncation

logger = logging.getLogger(__name__)

MAX_BLOB_ATTEMPTS = 1000


class View(str, enum.Enum):
    CC = "cc"
    MLO = "mlo"


class ProjectionModel(BaseModel):
    """Matrizes de projeção ortográfica e rotação em torno do eixo x."""

    model_config = ConfigDict(frozen=True)

    theta: float = Field(default=math.pi / 4, description="Ângulo de rotação para a vista MLO (rad)")

    @cached_property
    def projection(self) -> np.ndarray:
        return np.diag([1.0, 1.0, 0.0])

    @cached_property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])

    def matrix(self, view: View) -> np.ndarray:
        if View(view) is View.CC:
            return self.projection
        return self.projection @ self.rotation


DEFAULT_MODEL = ProjectionModel()


def adjoint_constant(depth: int) -> float:
    """k em ⟨project_volume(v), img⟩ = k·⟨v, back_project(img)⟩."""
    return 1.0 / depth


def project_point(p, view: View, model: ProjectionModel = DEFAULT_MODEL) -> np.ndarray:
    """Projeta pontos ``(..., 3)`` no plano z=0 da vista pedida."""
    points = np.asarray(p, dtype=np.float64)
    if points.shape[-1:] != (3,):
        raise ShapeError("project_point", points.shape, (3,))
    return points @ model.matrix(view).T


def mlo_offset(depth: int) -> int:
    return depth // 2


def mlo_rows(depth: int, height: int) -> np.ndarray:
    """``rows[z, y]``: linha MLO do voxel ``(z, y)``; pode cair fora de ``[0, H)``."""
    z = np.arange(depth)[:, None]
    y = np.arange(height)[None, :]
    return y - z + mlo_offset(depth)


def _mlo_sources(depth: int, height: int) -> np.ndarray:
    # sources[z, r]: y do voxel na profundidade z que cai na linha r
    z = np.arange(depth)[:, None]
    r = np.arange(height)[None, :]
    return r + z - mlo_offset(depth)


def ray_coverage(view: View, depth: int, height: int) -> np.ndarray:
    """Fração das ``D`` amostras de cada raio que cai dentro do volume, por linha da imagem."""
    if View(view) is View.CC:
        return np.ones(height)
    sources = _mlo_sources(depth, height)
    inside = (sources >= 0) & (sources < height)
    return inside.sum(axis=0) / depth


def project_volume(volume: np.ndarray, view: View) -> np.ndarray:
    """Agrega por média ao longo do raio de cada vista: ``(..., D, H, W) -> (..., H, W)``."""
    volume = np.asarray(volume)
    if volume.ndim < 3:
        raise ShapeError("project_volume", volume.shape, detail="expected (..., D, H, W)")
    if View(view) is View.CC:
        return volume.mean(axis=-3)
    depth, height = volume.shape[-3:-1]
    sources = _mlo_sources(depth, height)
    inside = (sources >= 0) & (sources < height)
    z = np.arange(depth)[:, None]
    sheared = volume[..., z, np.clip(sources, 0, height - 1), :]
    sheared = np.where(inside[:, :, None], sheared, np.zeros((), dtype=volume.dtype))
    return sheared.mean(axis=-3)


def back_project(image: np.ndarray, view: View, depth: int) -> np.ndarray:
    """Replica cada pixel ao longo do seu raio: ``(..., H, W) -> (..., D, H, W)``."""
    image = np.asarray(image)
    if image.ndim < 2:
        raise ShapeError("back_project", image.shape, detail="expected (..., H, W)")
    if depth < 1:
        raise GeometryError(f"back_project: depth must be >= 1, got {depth}")
    height, width = image.shape[-2:]
    if View(view) is View.CC:
        expanded = np.expand_dims(image, axis=-3)
        return np.broadcast_to(expanded, image.shape[:-2] + (depth, height, width)).copy()
    rows = mlo_rows(depth, height)
    inside = (rows >= 0) & (rows < height)
    smeared = image[..., np.clip(rows, 0, height - 1), :]
    return np.where(inside[:, :, None], smeared, np.zeros((), dtype=image.dtype))


def build_feature_volume(lat_cc: np.ndarray, lat_mlo: np.ndarray, depth: Optional[int] = None) -> np.ndarray:
    """Volume bruto ``(..., 2c, D, H, W)``: metade CC seguida da metade MLO.

    Entradas ``(..., c, H, W)``; ``depth`` padrão é ``H``.
    """
    lat_cc = np.asarray(lat_cc)
    lat_mlo = np.asarray(lat_mlo)
    if lat_cc.shape != lat_mlo.shape or lat_cc.ndim < 3:
        raise ShapeError("build_feature_volume", lat_cc.shape, lat_mlo.shape)
    depth = lat_cc.shape[-2] if depth is None else depth
    from_cc = back_project(lat_cc, View.CC, depth)
    from_mlo = back_project(lat_mlo, View.MLO, depth)
    return np.concatenate([from_cc, from_mlo], axis=-4)


# ---------------------------------------------------------------------- #
#  Fantoma                                                               #
# ---------------------------------------------------------------------- #


def hemisphere_center(grid_size: int) -> np.ndarray:
    """Centro (x, y, z) da semiesfera; o plano da parede fica em ``x = W - 0.5``."""
    mid = (grid_size - 1) / 2.0
    return np.array([grid_size - 0.5, mid, mid])


def hemisphere_mask(grid_size: int, radius: float) -> np.ndarray:
    cx, cy, cz = hemisphere_center(grid_size)
    z, y, x = np.meshgrid(*(np.arange(grid_size, dtype=np.float64),) * 3, indexing="ij")
    return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= radius**2


def phantom_generate(spec: PhantomSpec) -> np.ndarray:
    n = spec.grid_size
    if spec.radius > n:
        raise GeometryError(f"phantom radius {spec.radius} exceeds grid size {n}")
    # maior |y - z| dentro da semiesfera, contra a margem de linhas em torno de D//2
    spread = math.floor(spec.radius * math.sqrt(2.0))
    if spread > min(mlo_offset(n), n - 1 - mlo_offset(n)):
        logger.warning(
            "⚠️ Phantom radius %.2f puts part of the MLO view outside a %d grid", spec.radius, n
        )

    rng = make_rng(spec.seed)
    support = hemisphere_mask(n, spec.radius)
    center = hemisphere_center(n)
    coords = np.stack(
        np.meshgrid(*(np.arange(n, dtype=np.float64),) * 3, indexing="ij"), axis=-1
    )[..., ::-1]  # (z, y, x, 3) com componentes (x, y, z)

    volume = np.where(support, spec.base_intensity, 0.0)
    low = np.maximum(center - spec.radius, 0.0)
    high = np.minimum(center + spec.radius, n - 1.0)
    for _ in range(spec.blob_count):
        blob_center = center.copy()
        for _ in range(MAX_BLOB_ATTEMPTS):
            candidate = rng.uniform(low, high)
            if np.sum((candidate - center) ** 2) <= spec.radius**2:
                blob_center = candidate
                break
        amplitude = rng.uniform(*spec.blob_intensity)
        sigma = rng.uniform(*spec.blob_sigma)
        dist2 = np.sum((coords - blob_center) ** 2, axis=-1)
        volume += amplitude * np.exp(-dist2 / (2.0 * sigma**2))
    volume = np.where(support, volume, 0.0)
    return volume.astype(np.float32)


def make_pair(
    volume: np.ndarray,
    sample_id: int = 0,
    seed: int = 0,
    p_lo: float = 1.0,
    p_hi: float = 99.0,
) -> ViewPair:
    cc = normalize_truncation(project_volume(volume, View.CC), p_lo, p_hi)
    mlo = normalize_truncation(project_volume(volume, View.MLO), p_lo, p_hi)
    return ViewPair(cc=cc, mlo=mlo, sample_id=sample_id, seed=seed)
