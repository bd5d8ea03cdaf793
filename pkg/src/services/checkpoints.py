from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..errors import CA3DError
from ..models.records import ModelCheckpoint, ScheduleParams
from ..networks.unet import UNet
from .container import container_read, container_write
from .diffusion import NoiseSchedule, make_schedule

logger = logging.getLogger(__name__)

META_RECORD = "meta"
PARAM_PREFIX = "param/"


def save_checkpoint(
    path: Union[str, Path],
    model: UNet,
    sched: NoiseSchedule,
    step: int,
    seed: int,
) -> ModelCheckpoint:
    state = model.state_dict()
    meta = ModelCheckpoint(
        unet=model.config,
        schedule=ScheduleParams(
            timesteps=sched.timesteps, beta_start=sched.beta_start, beta_end=sched.beta_end
        ),
        step=step,
        seed=seed,
        parameter_names=list(state),
    )
    records = [(META_RECORD, np.frombuffer(meta.model_dump_json().encode("utf-8"), dtype=np.uint8))]
    records.extend((f"{PARAM_PREFIX}{name}", value) for name, value in state.items())
    container_write(path, records)
    logger.info("💾 Checkpoint saved to %s (step %d, %d tensors)", path, step, len(state))
    return meta


def load_checkpoint(path: Union[str, Path]) -> Tuple[UNet, NoiseSchedule, ModelCheckpoint]:
    path = Path(path)
    if not path.is_file():
        raise CA3DError(f"checkpoint not found: {path}")
    records = container_read(path)
    if META_RECORD not in records:
        raise CA3DError(f"{path}: checkpoint metadata record missing")
    meta = ModelCheckpoint.model_validate_json(records[META_RECORD].tobytes().decode("utf-8"))
    model = UNet(meta.unet)
    state = {
        name[len(PARAM_PREFIX) :]: value for name, value in records.items() if name.startswith(PARAM_PREFIX)
    }
    if sorted(state) != sorted(meta.parameter_names):
        raise CA3DError(f"{path}: parameter records do not match the checkpoint metadata")
    model.load_state_dict(state)
    sched = make_schedule(meta.schedule.timesteps, meta.schedule.beta_start, meta.schedule.beta_end)
    logger.info("✅ Checkpoint loaded from %s (step %d)", path, meta.step)
    return model, sched, meta


@lru_cache(maxsize=4)
def _load_versioned(path: str, mtime_ns: int) -> Tuple[UNet, NoiseSchedule, ModelCheckpoint]:
    return load_checkpoint(path)


def load_checkpoint_cached(path: Union[str, Path]) -> Tuple[UNet, NoiseSchedule, ModelCheckpoint]:
    """Como ``load_checkpoint``, reutilizando o modelo enquanto o arquivo não mudar."""
    path = Path(path)
    if not path.is_file():
        raise CA3DError(f"checkpoint not found: {path}")
    return _load_versioned(str(path.resolve()), path.stat().st_mtime_ns)
