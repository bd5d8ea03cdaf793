"""Ablação das quatro variantes (completo, sem CACA, sem injeção 3D, nenhum) mais a cópia da referência."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from ..errors import CA3DError, UsageError
from ..models.config import RunConfig
from ..models.records import MetricReport
from .checkpoints import load_checkpoint
from .container import atomic_write_bytes
from .dataset import load_split
from .training import apply_ablation, train_model
from .translation_service import evaluate_pairs

logger = logging.getLogger(__name__)

VARIANTS: Tuple[Tuple[str, bool, bool], ...] = (
    ("full", False, False),
    ("no-caca", True, False),
    ("no-im3d", False, True),
    ("neither", True, True),
)
COPY_REFERENCE = "copy-reference"


class AblationRow(BaseModel):
    variant: str
    seed: int
    direction: str
    psnr: float
    ssim: float


class AblationSummary(BaseModel):
    rows: List[AblationRow]

    def means(self) -> Dict[Tuple[str, str], Tuple[float, float]]:
        """Média (PSNR, SSIM) por ``(variante, direção)`` sobre as sementes."""
        grouped: Dict[Tuple[str, str], List[AblationRow]] = {}
        for row in self.rows:
            grouped.setdefault((row.variant, row.direction), []).append(row)
        return {
            key: (float(np.mean([r.psnr for r in rows])), float(np.mean([r.ssim for r in rows])))
            for key, rows in grouped.items()
        }

    def render(self) -> str:
        lines = ["variant\tdirection\tpsnr\tssim"]
        for (variant, direction), (psnr, ssim) in self.means().items():
            lines.append(f"{variant}\t{direction}\t{psnr:.6f}\t{ssim:.6f}")
        return "\n".join(lines) + "\n"


def _rows(variant: str, seed: int, reports: Sequence[MetricReport]) -> List[AblationRow]:
    return [
        AblationRow(variant=variant, seed=seed, direction=r.direction, psnr=r.psnr_mean, ssim=r.ssim_mean)
        for r in reports
    ]


def run_ablation(
    data_dir: Union[str, Path],
    config: RunConfig,
    steps: int,
    seeds: Sequence[int],
    out_dir: Union[str, Path],
    sampling_steps: Optional[int] = None,
    threads: Optional[int] = None,
) -> AblationSummary:
    if not seeds:
        raise UsageError("ablate: at least one seed is required")
    train_pairs = load_split(data_dir, "train")
    val_pairs = load_split(data_dir, "val")
    test_pairs = load_split(data_dir, "test")
    if not train_pairs or not test_pairs:
        raise CA3DError(f"ablate: {data_dir} needs non-empty train and test splits")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps_at_sampling = sampling_steps or config.sampling_steps

    rows: List[AblationRow] = []
    baseline = evaluate_pairs(test_pairs, mode="copy-reference", threads=threads)
    rows.extend(_rows(COPY_REFERENCE, 0, baseline))

    for seed in seeds:
        for variant, no_caca, no_im3d in VARIANTS:
            variant_config = apply_ablation(config, no_caca=no_caca, no_im3d=no_im3d).model_copy(
                update={"seed": seed}
            )
            checkpoint = out_dir / f"{variant}_seed{seed}.ca3d"
            logger.info("🧪 Ablation %s (seed %d)", variant, seed)
            train_model(
                train_pairs,
                variant_config,
                steps,
                checkpoint,
                log_path=out_dir / f"{variant}_seed{seed}.log.tsv",
                val_pairs=val_pairs,
            )
            model, sched, _ = load_checkpoint(checkpoint)
            reports = evaluate_pairs(
                test_pairs,
                model=model,
                sched=sched,
                steps=steps_at_sampling,
                guidance=config.guidance_scale,
                seed=seed,
                volume_source=config.volume_source,
                threads=threads,
            )
            rows.extend(_rows(variant, seed, reports))

    summary = AblationSummary(rows=rows)
    atomic_write_bytes(out_dir / "ablation.tsv", summary.render().encode("utf-8"))
    logger.info("✅ Ablation finished: %d variants x %d seeds", len(VARIANTS), len(seeds))
    return summary
