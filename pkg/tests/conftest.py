from __future__ import annotations

import numpy as np
import pytest

from src import settings
from src.engine.rng import make_rng
from src.models.config import RunConfig, UNetConfig
from src.models.records import ViewPair
from src.services.dataset import phantom_spec_for
from src.services.geometry import make_pair, phantom_generate


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale runs, enabled with CA3D_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if settings.CA3D_RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="set CA3D_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234)


@pytest.fixture
def tiny_unet_config() -> UNetConfig:
    return UNetConfig(
        image_size=8,
        base_channels=8,
        channel_mult=(1, 2),
        attention_levels=(1,),
        groups=4,
        heads=2,
        depth_slabs=2,
        refine_channels=4,
    )


@pytest.fixture
def tiny_run_config() -> RunConfig:
    return RunConfig(
        timesteps=20,
        sampling_steps=5,
        image_size=8,
        base_channels=8,
        channel_mult=(1, 2),
        attention_levels=(1,),
        groups=4,
        heads=2,
        depth_slabs=2,
        refine_channels=4,
        batch_size=4,
        warmup_steps=0,
        log_every=1,
    )


@pytest.fixture
def tiny_pairs() -> list:
    pairs = []
    for index in range(4):
        volume = phantom_generate(phantom_spec_for(8, seed=index))
        pairs.append(make_pair(volume, sample_id=index, seed=index))
    return pairs


@pytest.fixture
def random_pair(rng) -> ViewPair:
    return ViewPair(
        cc=rng.random((8, 8)).astype(np.float32),
        mlo=rng.random((8, 8)).astype(np.float32),
        sample_id=0,
        seed=0,
    )
