"""Corridas em escala de desktop; habilite com CA3D_RUN_SLOW=1."""

from __future__ import annotations

import pytest

from src.models.config import RunConfig
from src.services.ablation import COPY_REFERENCE, run_ablation
from src.services.checkpoints import load_checkpoint
from src.services.dataset import dataset_generate, load_split, phantom_spec_for
from src.services.training import train_model
from src.services.translation_service import evaluate_pairs

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    dataset_generate(out, 500, phantom_spec_for(32), seed=0)
    return out


def test_training_beats_copy_reference(desk_data, tmp_path):
    config = RunConfig()
    result = train_model(
        load_split(desk_data, "train"), config, 2000, tmp_path / "desk.ca3d", log_path=tmp_path / "desk.log.tsv"
    )
    assert result.final_loss < 0.5 * result.initial_loss

    test_pairs = load_split(desk_data, "test")
    model, sched, _ = load_checkpoint(tmp_path / "desk.ca3d")
    translated = evaluate_pairs(test_pairs, model=model, sched=sched, steps=config.sampling_steps)
    baseline = evaluate_pairs(test_pairs, mode="copy-reference")
    assert translated[0].direction == "cc2mlo"
    assert translated[0].psnr_mean > baseline[0].psnr_mean


def test_ablation_ordering(desk_data, tmp_path):
    seeds = [0, 1, 2]
    summary = run_ablation(desk_data, RunConfig(), 2000, seeds, tmp_path / "ablation")
    psnr = {}
    for row in summary.rows:
        if row.variant != COPY_REFERENCE and row.direction == "cc2mlo":
            psnr[(row.variant, row.seed)] = row.psnr

    def wins(better: str, worse: str) -> int:
        return sum(psnr[(better, seed)] >= psnr[(worse, seed)] for seed in seeds)

    for single in ("no-caca", "no-im3d"):
        assert wins("full", single) >= 2
        assert wins(single, "neither") >= 2
