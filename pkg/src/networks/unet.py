"""Denoiser condicional: UNet residual com CACA, refinamento 3D e injeção.

O caminho da referência reutiliza os blocos do encoder (pesos compartilhados)
e expõe as características de cada nível à CACA. Os volumes 3D vêm das
latentes ruidosas de referência e alvo, média-reduzidas até a resolução de
cada nível de atenção e retroprojetadas conforme a direção de cada amostra.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional

import numpy as np

from ..engine import functional as F
from ..engine.nn import Conv2d, Conv3d, GroupNorm, Linear, Module
from ..engine.rng import make_rng
from ..engine.tensor import Tensor, as_tensor
from ..errors import ShapeError
from ..models.config import CACAConfig, UNetConfig
from ..services.diffusion import cond_embedding
from ..services.geometry import build_feature_volume
from ..services.imaging import avg_pool2d
from .attention import CACABlock, Inject3D
from .conditioning import ConditionEmbedder

logger = logging.getLogger(__name__)

OUTPUT_GAIN = 0.1


class ResBlock(Module):
    """GroupNorm-SiLU-Conv duas vezes, com c_emb aplicado como escala e deslocamento por canal."""

    def __init__(self, in_channels: int, out_channels: int, emb_dim: int, groups: int, rng: np.random.Generator) -> None:
        self.out_channels = out_channels
        self.norm1 = GroupNorm(groups, in_channels)
        self.conv1 = Conv2d(in_channels, out_channels, 3, rng)
        self.emb_proj = Linear(emb_dim, 2 * out_channels, rng)
        self.norm2 = GroupNorm(groups, out_channels)
        self.conv2 = Conv2d(out_channels, out_channels, 3, rng)
        self.skip = Conv2d(in_channels, out_channels, 1, rng) if in_channels != out_channels else None

    def forward(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        modulation = F.reshape(self.emb_proj(F.silu(emb)), (emb.shape[0], 2 * self.out_channels, 1, 1))
        scale = modulation[:, : self.out_channels]
        shift = modulation[:, self.out_channels :]
        h = F.add(F.mul(self.norm2(h), F.add(scale, 1.0)), shift)
        h = self.conv2(F.silu(h))
        residual = self.skip(x) if self.skip is not None else x
        return F.add(residual, h)


class Downsample(Module):
    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        self.conv = Conv2d(channels, channels, 3, rng, stride=2, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class Upsample(Module):
    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        self.conv = Conv2d(channels, channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(F.upsample_nearest2d(x, 2))


class Refine3D(Module):
    """Duas convoluções 3x3x3 com SiLU entre elas: ``in_channels -> hidden -> out_channels``."""

    def __init__(self, in_channels: int, hidden: int, out_channels: int, rng: np.random.Generator) -> None:
        self.in_channels = in_channels
        self.conv1 = Conv3d(in_channels, hidden, 3, rng)
        self.conv2 = Conv3d(hidden, out_channels, 3, rng)

    def forward(self, raw_volume) -> Tensor:
        raw_volume = as_tensor(raw_volume)
        if raw_volume.ndim != 5 or raw_volume.shape[1] != self.in_channels:
            raise ShapeError("refine_3d", raw_volume.shape, (self.in_channels,), detail="channel mismatch")
        return self.conv2(F.silu(self.conv1(raw_volume)))


def refine_3d(raw_volume, module: Refine3D) -> Tensor:
    return module(raw_volume)


class CrossViewBlock(Module):
    """CACA seguida da injeção do volume 3D (quando habilitada)."""

    def __init__(self, channels: int, config: UNetConfig, rng: np.random.Generator) -> None:
        caca_config = CACAConfig(
            sigma=config.sigma,
            heads=config.heads,
            channels=channels,
            use_column_bias=config.use_caca,
        )
        self.caca = CACABlock(channels, config.groups, caca_config, rng)
        self.inject = Inject3D(channels, config.heads, config.depth_slabs, rng) if config.use_im3d else None

    def forward(self, h: Tensor, ref: Tensor, f_3d: Optional[Tensor]) -> Tensor:
        h = self.caca(h, ref)
        if self.inject is not None and f_3d is not None:
            h = self.inject(h, f_3d)
        return h


class Level(Module):
    def __init__(self, in_channels: int, channels: int, config: UNetConfig, rng: np.random.Generator) -> None:
        self.blocks = [
            ResBlock(in_channels, channels, config.emb_dim, config.groups, rng),
            ResBlock(channels, channels, config.emb_dim, config.groups, rng),
        ]

    def forward(self, h: Tensor, emb: Tensor) -> Tensor:
        for block in self.blocks:
            h = block(h, emb)
        return h


class UNet(Module):
    def __init__(self, config: UNetConfig) -> None:
        self.config = config
        rng = make_rng(config.seed)
        widths = config.widths
        levels = len(widths)
        self.embedder = ConditionEmbedder(config.base_channels, config.emb_dim, rng)
        self.stem = Conv2d(config.latent_channels, widths[0], 3, rng)

        self.encoder: List[Level] = []
        self.downs: List[Downsample] = []
        previous = widths[0]
        for level, width in enumerate(widths):
            self.encoder.append(Level(previous, width, config, rng))
            if level < levels - 1:
                self.downs.append(Downsample(width, rng))
            previous = width
        self.middle = ResBlock(widths[-1], widths[-1], config.emb_dim, config.groups, rng)

        self.decoder: List[Level] = []
        self.ups: List[Upsample] = []
        current = widths[-1]
        for level in reversed(range(levels)):
            self.decoder.append(Level(current + widths[level], widths[level], config, rng))
            if level > 0:
                self.ups.append(Upsample(widths[level], rng))
            current = widths[level]

        self.encoder_cross = [CrossViewBlock(widths[level], config, rng) for level in config.attention_levels]
        self.decoder_cross = [CrossViewBlock(widths[level], config, rng) for level in config.attention_levels]
        self.refiners = (
            [
                Refine3D(2 * config.latent_channels, config.refine_channels, widths[level], rng)
                for level in config.attention_levels
            ]
            if config.use_im3d
            else []
        )

        self.out_norm = GroupNorm(config.groups, widths[0])
        self.out_conv = Conv2d(widths[0], config.latent_channels, 3, rng, gain=OUTPUT_GAIN)
        logger.debug("✅ UNet built with %d parameters", self.parameter_count())

    # ------------------------------------------------------------------ #

    def raw_volumes(
        self,
        z_t: np.ndarray,
        ref_t: np.ndarray,
        d: np.ndarray,
        target_in_volume: bool = True,
    ) -> Dict[int, np.ndarray]:
        """Volumes brutos por nível de atenção, com a metade CC/MLO escolhida por ``d``."""
        d = np.asarray(d).reshape(-1, 1, 1, 1)
        target = z_t if target_in_volume else np.zeros_like(z_t)
        lat_cc = np.where(d == 0, ref_t, target)
        lat_mlo = np.where(d == 0, target, ref_t)
        volumes = {}
        for level in self.config.attention_levels:
            factor = 2**level
            volumes[level] = build_feature_volume(avg_pool2d(lat_cc, factor), avg_pool2d(lat_mlo, factor))
        return volumes

    def refine_volumes(self, raw: Dict[int, np.ndarray]) -> Dict[int, Tensor]:
        return {
            level: refine_3d(Tensor(raw[level]), refiner)
            for level, refiner in zip(self.config.attention_levels, self.refiners)
        }

    def denoise(
        self,
        z_t,
        emb: Tensor,
        z_ref,
        f_3d: Optional[Dict[int, Tensor]] = None,
    ) -> Tensor:
        """ε_θ(z_t, c_emb, z_ref) com os volumes já refinados por nível."""
        z_t, z_ref = as_tensor(z_t), as_tensor(z_ref)
        if z_t.shape != z_ref.shape or z_t.ndim != 4:
            raise ShapeError("unet_forward", z_t.shape, z_ref.shape)
        expected = (self.config.latent_channels, self.config.image_size, self.config.image_size)
        if z_t.shape[1:] != expected:
            raise ShapeError("unet_forward", z_t.shape, expected, detail="input does not match UNetConfig")
        f_3d = f_3d or {}
        levels = len(self.encoder)
        attention = {level: index for index, level in enumerate(self.config.attention_levels)}

        r = self.stem(z_ref)
        ref_features = []
        for level, stage in enumerate(self.encoder):
            r = stage(r, emb)
            ref_features.append(r)
            if level < levels - 1:
                r = self.downs[level](r)

        h = self.stem(z_t)
        skips = []
        for level, stage in enumerate(self.encoder):
            h = stage(h, emb)
            if level in attention:
                h = self.encoder_cross[attention[level]](h, ref_features[level], f_3d.get(level))
            skips.append(h)
            if level < levels - 1:
                h = self.downs[level](h)

        h = self.middle(h, emb)

        for index, stage in enumerate(self.decoder):
            level = levels - 1 - index
            h = stage(F.concat([h, skips[level]], axis=1), emb)
            if level in attention:
                h = self.decoder_cross[attention[level]](h, ref_features[level], f_3d.get(level))
            if level > 0:
                h = self.ups[index](h)

        return self.out_conv(F.silu(self.out_norm(h)))

    def forward(
        self,
        z_t,
        t,
        d,
        z_ref,
        ref_t=None,
        null=None,
        target_in_volume: bool = True,
    ) -> Tensor:
        """Previsão de ε para um lote.

        ``z_ref`` é a referência limpa (condição da CACA); ``ref_t`` é a
        referência ruidosa no mesmo t, usada no volume 3D. Amostras com
        ``null`` recebem referência zero e a linha nula de direção.
        """
        z_t_data = np.asarray(z_t.data if isinstance(z_t, Tensor) else z_t, dtype=np.float32)
        z_ref = np.asarray(z_ref, dtype=np.float32)
        ref_t = z_ref if ref_t is None else np.asarray(ref_t, dtype=np.float32)
        batch = z_t_data.shape[0]
        d = np.broadcast_to(np.asarray(d, dtype=np.int64), (batch,))
        t = np.broadcast_to(np.asarray(t), (batch,))
        null_mask = np.zeros(batch, dtype=bool) if null is None else np.broadcast_to(np.asarray(null, dtype=bool), (batch,))
        if null_mask.any():
            keep = (~null_mask).reshape(-1, 1, 1, 1)
            z_ref = np.where(keep, z_ref, 0.0).astype(np.float32)
            ref_t = np.where(keep, ref_t, 0.0).astype(np.float32)

        emb = cond_embedding(t, d, null_mask, self.embedder)
        f_3d = None
        if self.config.use_im3d and self.config.attention_levels:
            f_3d = self.refine_volumes(self.raw_volumes(z_t_data, ref_t, d, target_in_volume))
        return self.denoise(z_t, emb, z_ref, f_3d)
