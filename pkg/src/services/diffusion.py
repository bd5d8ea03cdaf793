"""Processo de difusão: cronograma, ruído direto, perda com máscara CFG e amostrador guiado."""

from __future__ import annotations

import enum
import logging
from typing import Callable, List, Protocol, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..engine import functional as F
from ..engine.rng import make_rng
from ..engine.tensor import Tensor, no_grad
from ..errors import ShapeError, UsageError
from ..models.records import ViewPair
from ..networks.conditioning import ConditionEmbedder

logger = logging.getLogger(__name__)

DEFAULT_SAMPLING_STEPS = 50
DEFAULT_GUIDANCE_SCALE = 3.0

# (z_t, t, d, z_ref, ref_t, null, target_in_volume) -> ε previsto
Denoiser = Callable[..., Union[Tensor, np.ndarray]]


class Direction(enum.IntEnum):
    CC2MLO = 0
    MLO2CC = 1

    @classmethod
    def parse(cls, value: Union[str, int, "Direction"]) -> "Direction":
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise UsageError(f"invalid direction {value!r}, expected cc2mlo or mlo2cc") from None
        try:
            return cls(int(value))
        except ValueError:
            raise UsageError(f"invalid direction {value!r}, expected 0 or 1") from None

    @property
    def label(self) -> str:
        return self.name.lower()


class NoiseSchedule(BaseModel):
    """β, α e ᾱ para T passos; ``alpha_bars[0] = 1`` e ``alpha_bars[t]`` vale para t em 1..T."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    timesteps: int = Field(..., ge=1)
    beta_start: float
    beta_end: float
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def alpha_bar(self, t) -> np.ndarray:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.timesteps):
            raise UsageError(f"timestep out of range 0..{self.timesteps}: {t}")
        return self.alpha_bars[t]


def make_schedule(timesteps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if timesteps < 1:
        raise UsageError(f"make_schedule: T must be >= 1, got {timesteps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise UsageError(f"make_schedule: need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, timesteps, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    return NoiseSchedule(
        timesteps=timesteps,
        beta_start=beta_start,
        beta_end=beta_end,
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
    )


def _per_sample(values: np.ndarray, ndim: int) -> np.ndarray:
    values = np.asarray(values)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim)) if values.ndim else values


def q_sample_at(z0: np.ndarray, alpha_bar, eps: np.ndarray) -> np.ndarray:
    """``sqrt(ᾱ) z0 + sqrt(1 - ᾱ) ε`` com coeficientes em float32."""
    z0 = np.asarray(z0, dtype=np.float32)
    eps = np.asarray(eps, dtype=np.float32)
    if z0.shape != eps.shape:
        raise ShapeError("q_sample", z0.shape, eps.shape)
    alpha_bar = np.asarray(alpha_bar, dtype=np.float64)
    signal = _per_sample(np.sqrt(alpha_bar).astype(np.float32), z0.ndim)
    noise = _per_sample(np.sqrt(1.0 - alpha_bar).astype(np.float32), z0.ndim)
    return signal * z0 + noise * eps


def q_sample(z0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Ruído direto no passo ``t`` (escalar ou um por amostra)."""
    return q_sample_at(z0, sched.alpha_bar(t), eps)


def cond_embedding(t, d, null, embedder: ConditionEmbedder) -> Tensor:
    """``c_emb`` por amostra; onde ``null`` é verdadeiro a direção vira a condição nula."""
    return embedder(t, d, null)


def cfg_combine(eps_cond, eps_uncond, scale: float):
    """Guia sem classificador: ``u + s (c - u)``, escrito como ``(1 - s) u + s c``."""
    cond_shape = np.shape(eps_cond.data if isinstance(eps_cond, Tensor) else eps_cond)
    uncond_shape = np.shape(eps_uncond.data if isinstance(eps_uncond, Tensor) else eps_uncond)
    if cond_shape != uncond_shape:
        raise ShapeError("cfg_combine", cond_shape, uncond_shape)
    if isinstance(eps_cond, Tensor) or isinstance(eps_uncond, Tensor):
        return F.add(F.scale(eps_uncond, 1.0 - scale), F.scale(eps_cond, scale))
    eps_cond = np.asarray(eps_cond)
    eps_uncond = np.asarray(eps_uncond)
    dtype = np.result_type(eps_cond, eps_uncond)
    return ((1.0 - scale) * eps_uncond + scale * eps_cond).astype(dtype)


class LatentCodec(Protocol):
    def encode(self, images: np.ndarray) -> np.ndarray: ...

    def decode(self, latents: np.ndarray) -> np.ndarray: ...


class IdentityCodec:
    """Codificador identidade: imagens ``(B, H, W)`` viram latentes ``(B, 1, H, W)``."""

    def encode(self, images: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 2:
            images = images[None]
        return images[:, None]

    def decode(self, latents: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(latents)[:, 0], 0.0, 1.0).astype(np.float32)


IDENTITY_CODEC = IdentityCodec()


def _as_array(value) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


# ---------------------------------------------------------------------- #
#  Treinamento                                                           #
# ---------------------------------------------------------------------- #


def expand_directions(
    pairs: Sequence[ViewPair],
    codec: LatentCodec = IDENTITY_CODEC,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cada par vira dois itens: primeiro todos CC→MLO (ref = CC), depois todos MLO→CC."""
    cc = codec.encode(np.stack([pair.cc for pair in pairs]))
    mlo = codec.encode(np.stack([pair.mlo for pair in pairs]))
    z_ref = np.concatenate([cc, mlo], axis=0)
    z_tar = np.concatenate([mlo, cc], axis=0)
    d = np.concatenate([np.full(len(pairs), Direction.CC2MLO), np.full(len(pairs), Direction.MLO2CC)])
    return z_ref, z_tar, d.astype(np.int64)


def draw_training_inputs(
    rng: np.random.Generator, count: int, timesteps: int, mask_prob: float
) -> Tuple[np.ndarray, np.ndarray]:
    """t uniforme em [1, T] e a máscara CFG (True = ramo incondicional) por item."""
    t = rng.integers(1, timesteps + 1, size=count)
    masked = rng.random(count) < mask_prob
    return t, masked


def training_loss(
    model: Denoiser,
    batch: Sequence[ViewPair],
    sched: NoiseSchedule,
    mask_prob: float,
    rng: np.random.Generator,
    target_in_volume: bool = True,
    codec: LatentCodec = IDENTITY_CODEC,
) -> Tensor:
    if not batch:
        raise UsageError("training_loss: empty batch")
    z_ref, z_tar, d = expand_directions(batch, codec)
    count = z_tar.shape[0]
    t, masked = draw_training_inputs(rng, count, sched.timesteps, mask_prob)
    eps = rng.standard_normal(z_tar.shape).astype(np.float32)
    eps_ref = rng.standard_normal(z_ref.shape).astype(np.float32)
    z_t = q_sample(z_tar, t, eps, sched)
    ref_t = q_sample(z_ref, t, eps_ref, sched)
    prediction = model(z_t, t, d, z_ref, ref_t, masked, target_in_volume)
    return F.mse_loss(prediction, Tensor(eps))


# ---------------------------------------------------------------------- #
#  Amostragem                                                            #
# ---------------------------------------------------------------------- #


def sampling_timesteps(timesteps: int, steps: int) -> List[int]:
    """Passos igualmente espaçados em [1, T], em ordem decrescente."""
    if not 1 <= steps <= timesteps:
        raise UsageError(f"sampling steps must be in 1..{timesteps}, got {steps}")
    grid = np.unique(np.round(np.linspace(1, timesteps, steps)).astype(np.int64))
    return [int(t) for t in grid[::-1]]


def sample_latent(
    model: Denoiser,
    z_ref: np.ndarray,
    d,
    sched: NoiseSchedule,
    steps: int = DEFAULT_SAMPLING_STEPS,
    scale: float = DEFAULT_GUIDANCE_SCALE,
    seed: int = 0,
    target_in_volume: bool = True,
    conditional_only: bool = False,
) -> np.ndarray:
    """Amostrador determinístico (não markoviano, eta = 0) com guia CFG.

    A cada passo a referência é re-ruidada no mesmo t com um ruído sorteado
    uma única vez; o volume 3D usa essa referência e a latente alvo atual.
    """
    timesteps = sampling_timesteps(sched.timesteps, steps)
    z_ref = np.asarray(z_ref, dtype=np.float32)
    batch = z_ref.shape[0]
    d = np.broadcast_to(np.asarray(d, dtype=np.int64), (batch,))
    rng = make_rng(seed)
    z = rng.standard_normal(z_ref.shape).astype(np.float32)
    eps_ref = rng.standard_normal(z_ref.shape).astype(np.float32)
    conditional = np.zeros(batch, dtype=bool)
    unconditional = np.ones(batch, dtype=bool)

    with no_grad():
        for index, t in enumerate(timesteps):
            t_prev = timesteps[index + 1] if index + 1 < len(timesteps) else 0
            alpha_bar = float(sched.alpha_bar(t))
            alpha_bar_prev = float(sched.alpha_bar(t_prev))
            ref_t = q_sample(z_ref, t, eps_ref, sched)
            t_batch = np.full(batch, t, dtype=np.int64)
            eps = _as_array(model(z, t_batch, d, z_ref, ref_t, conditional, target_in_volume))
            if not conditional_only:
                eps_uncond = _as_array(model(z, t_batch, d, z_ref, ref_t, unconditional, target_in_volume))
                eps = cfg_combine(eps, eps_uncond, scale)
            z0_pred = (z - np.sqrt(1.0 - alpha_bar) * eps) / np.sqrt(alpha_bar)
            z = (np.sqrt(alpha_bar_prev) * z0_pred + np.sqrt(1.0 - alpha_bar_prev) * eps).astype(np.float32)
    return z


def sample(
    model: Denoiser,
    x_ref: np.ndarray,
    d,
    sched: NoiseSchedule,
    steps: int = DEFAULT_SAMPLING_STEPS,
    scale: float = DEFAULT_GUIDANCE_SCALE,
    seed: int = 0,
    target_in_volume: bool = True,
    conditional_only: bool = False,
    codec: LatentCodec = IDENTITY_CODEC,
) -> np.ndarray:
    """Traduz ``x_ref`` (``(H, W)`` ou ``(B, H, W)``) para a outra vista, em [0, 1]."""
    single = np.ndim(x_ref) == 2
    z_ref = codec.encode(x_ref)
    z = sample_latent(
        model,
        z_ref,
        d,
        sched,
        steps=steps,
        scale=scale,
        seed=seed,
        target_in_volume=target_in_volume,
        conditional_only=conditional_only,
    )
    images = codec.decode(z)
    return images[0] if single else images
