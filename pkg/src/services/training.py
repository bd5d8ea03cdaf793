from __future__ import annotations

import logging
import math
import time
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from ..engine.optim import AdamW, LambdaLinearSchedule
from ..engine.rng import make_rng
from ..engine.tensor import no_grad
from ..errors import CA3DError, NumericalError, UsageError
from ..models.config import RunConfig
from ..models.records import ViewPair
from ..networks.unet import UNet
from .checkpoints import save_checkpoint
from .dataset import load_split
from .diffusion import NoiseSchedule, make_schedule, training_loss

logger = logging.getLogger(__name__)

VALIDATION_SEED_OFFSET = 0x5EED


class TrainingResult(BaseModel):
    steps: int
    initial_loss: float
    final_loss: float
    val_loss: Optional[float] = None
    checkpoint: str
    parameter_count: int


def apply_ablation(config: RunConfig, no_caca: bool = False, no_im3d: bool = False) -> RunConfig:
    updates = {}
    if no_caca:
        updates["use_caca"] = False
    if no_im3d:
        updates["use_im3d"] = False
    return config.model_copy(update=updates) if updates else config


def _draw_batch(rng: np.random.Generator, pairs: Sequence[ViewPair], batch_size: int) -> List[ViewPair]:
    size = min(max(1, batch_size // 2), len(pairs))
    return [pairs[index] for index in rng.choice(len(pairs), size=size, replace=False)]


def validation_loss(model: UNet, pairs: Sequence[ViewPair], sched: NoiseSchedule, config: RunConfig) -> Optional[float]:
    if not pairs:
        return None
    rng = make_rng(config.seed + VALIDATION_SEED_OFFSET)
    batch = list(pairs[: max(1, config.batch_size // 2)])
    with no_grad():
        loss = training_loss(
            model, batch, sched, 0.0, rng, target_in_volume=config.volume_source == "reference+target"
        )
    return loss.item()


def train_model(
    pairs: Sequence[ViewPair],
    config: RunConfig,
    steps: int,
    out_path: Union[str, Path],
    log_path: Optional[Union[str, Path]] = None,
    val_pairs: Sequence[ViewPair] = (),
) -> TrainingResult:
    if steps < 1:
        raise UsageError(f"train: steps must be >= 1, got {steps}")
    if not pairs:
        raise CA3DError("train: no training pairs")

    model = UNet(config.unet_config())
    sched = make_schedule(config.timesteps, config.beta_start, config.beta_end)
    optimizer = AdamW(
        model.named_parameters(),
        lr=config.learning_rate,
        weight_decay=config.weight_decay,
        schedule=LambdaLinearSchedule(
            warmup_steps=config.warmup_steps,
            final_factor=config.lr_final_factor,
            total_steps=steps,
        ),
    )
    rng = make_rng(config.seed)
    target_in_volume = config.volume_source == "reference+target"
    log_file = Path(log_path) if log_path is not None else None
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)

    logger.info(
        "🚀 Training %d steps on %d pairs (%d parameters, caca=%s, im3d=%s)",
        steps,
        len(pairs),
        model.parameter_count(),
        config.use_caca,
        config.use_im3d,
    )
    started = time.perf_counter()
    initial_loss = final_loss = math.nan
    val_loss: Optional[float] = None
    for step in range(steps):
        optimizer.zero_grad()
        batch = _draw_batch(rng, pairs, config.batch_size)
        loss = training_loss(model, batch, sched, config.mask_prob, rng, target_in_volume)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(f"non-finite training loss {value} at step {step}")
        if step == 0:
            initial_loss = value
        final_loss = value
        loss.backward()
        optimizer.step()

        if step % config.log_every == 0 or step == steps - 1:
            elapsed_ms = int((time.perf_counter() - started) * 1000)
            if log_file is not None:
                with log_file.open("a", encoding="utf-8") as handle:
                    handle.write(f"{step}\t{value:.6f}\t{elapsed_ms}\n")
            val_loss = validation_loss(model, val_pairs, sched, config)
            logger.info(
                "📈 step %d loss %.5f val %s lr %.2e",
                step,
                value,
                "n/a" if val_loss is None else f"{val_loss:.5f}",
                optimizer.current_lr(),
            )

    save_checkpoint(out_path, model, sched, step=steps, seed=config.seed)
    logger.info("✅ Training finished: loss %.5f -> %.5f", initial_loss, final_loss)
    return TrainingResult(
        steps=steps,
        initial_loss=initial_loss,
        final_loss=final_loss,
        val_loss=val_loss,
        checkpoint=str(out_path),
        parameter_count=model.parameter_count(),
    )


def train(
    data_dir: Union[str, Path],
    config: RunConfig,
    steps: int,
    out_path: Union[str, Path],
    log_path: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    pairs = load_split(data_dir, "train")
    if not pairs:
        raise CA3DError(f"no training pairs in {data_dir}")
    return train_model(pairs, config, steps, out_path, log_path, val_pairs=load_split(data_dir, "val"))
