"""Tradução de imagens isoladas e avaliação de um split nos dois sentidos."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from ..engine.rng import derive_seed
from ..errors import CA3DError, UsageError
from ..models.records import MetricReport, ViewPair
from ..networks.unet import UNet
from .concurrency import map_bounded, run_sync
from .container import container_read, container_write
from .dataset import load_split
from .diffusion import DEFAULT_GUIDANCE_SCALE, DEFAULT_SAMPLING_STEPS, Direction, NoiseSchedule, sample
from .imaging import read_pgm, write_pgm
from .metrics import score_samples

logger = logging.getLogger(__name__)

IMAGE_RECORD = "image"
Mode = Literal["model", "ground-truth", "copy-reference"]


def load_input_image(path: Union[str, Path]) -> np.ndarray:
    """Lê PGM (P5) ou um container com um registro 2D (``image`` ou o primeiro)."""
    path = Path(path)
    if not path.is_file():
        raise CA3DError(f"input image not found: {path}")
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    records = container_read(path)
    if IMAGE_RECORD in records:
        image = records[IMAGE_RECORD]
    else:
        candidates = [value for value in records.values() if value.ndim == 2 and value.dtype == np.float32]
        if not candidates:
            raise CA3DError(f"{path}: no 2D float32 record to translate")
        image = candidates[0]
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def output_paths(out: Union[str, Path]) -> Tuple[Path, Path]:
    out = Path(out)
    if out.suffix.lower() == ".pgm":
        return out, out.with_suffix(".ca3d")
    return out.with_suffix(".pgm"), out


def write_translation(out: Union[str, Path], image: np.ndarray) -> Tuple[Path, Path]:
    pgm_path, container_path = output_paths(out)
    write_pgm(pgm_path, image)
    container_write(container_path, {IMAGE_RECORD: image.astype(np.float32)})
    return pgm_path, container_path


def translate_image(
    model: UNet,
    sched: NoiseSchedule,
    image: np.ndarray,
    direction: Union[str, int, Direction],
    steps: int = DEFAULT_SAMPLING_STEPS,
    guidance: float = DEFAULT_GUIDANCE_SCALE,
    seed: int = 0,
    volume_source: str = "reference+target",
) -> np.ndarray:
    direction = Direction.parse(direction)
    expected = (model.config.image_size, model.config.image_size)
    if image.shape != expected:
        raise UsageError(f"input image {image.shape} does not match the model resolution {expected}")
    if steps > sched.timesteps:
        raise UsageError(f"--steps {steps} exceeds the checkpoint's T={sched.timesteps}")
    return sample(
        model,
        image,
        int(direction),
        sched,
        steps=steps,
        scale=guidance,
        seed=seed,
        target_in_volume=volume_source == "reference+target",
    )


def _roles(pair: ViewPair, direction: Direction) -> Tuple[np.ndarray, np.ndarray]:
    if direction is Direction.CC2MLO:
        return pair.cc, pair.mlo
    return pair.mlo, pair.cc


async def evaluate_pairs_async(
    pairs: Sequence[ViewPair],
    model: Optional[UNet] = None,
    sched: Optional[NoiseSchedule] = None,
    steps: int = DEFAULT_SAMPLING_STEPS,
    guidance: float = DEFAULT_GUIDANCE_SCALE,
    seed: int = 0,
    mode: Mode = "model",
    volume_source: str = "reference+target",
    threads: Optional[int] = None,
) -> List[MetricReport]:
    """Um ``MetricReport`` por direção (CC→MLO, depois MLO→CC); sementes por amostra ``seed XOR (2 id + d)``."""
    if mode == "model" and (model is None or sched is None):
        raise UsageError("evaluate: a model and schedule are required unless a diagnostic mode is used")

    reports = []
    for direction in Direction:

        def predict(pair: ViewPair, direction: Direction = direction) -> np.ndarray:
            reference, target = _roles(pair, direction)
            if mode == "ground-truth":
                return target
            if mode == "copy-reference":
                return reference
            return translate_image(
                model,
                sched,
                reference,
                direction,
                steps=steps,
                guidance=guidance,
                seed=derive_seed(seed, 2 * pair.sample_id + int(direction)),
                volume_source=volume_source,
            )

        predictions = await map_bounded(predict, pairs, limit=threads)
        targets = [_roles(pair, direction)[1] for pair in pairs]
        reports.append(score_samples(direction.label, [pair.sample_id for pair in pairs], predictions, targets))
    return reports


def evaluate_pairs(*args, **kwargs) -> List[MetricReport]:
    return run_sync(evaluate_pairs_async(*args, **kwargs))


def evaluate_split(
    data_dir: Union[str, Path],
    split: str = "test",
    **kwargs,
) -> List[MetricReport]:
    pairs = load_split(data_dir, split)
    if not pairs:
        raise CA3DError(f"split {split!r} in {data_dir} is empty")
    logger.info("🧪 Evaluating %d %s pairs in both directions", len(pairs), split)
    return evaluate_pairs(pairs, **kwargs)
