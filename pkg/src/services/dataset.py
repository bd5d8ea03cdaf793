"""Geração e leitura do conjunto de pares sintéticos.

Cada par vai para ``pair_XXXXX.ca3d`` (registros ``cc`` e ``mlo``) e o
``manifest.tsv`` lista ``id<TAB>seed<TAB>split`` em ordem de id.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel

from ..engine.rng import derive_seed, make_rng
from ..errors import CA3DError, UsageError
from ..models.config import PhantomSpec
from ..models.records import ManifestEntry, Split, ViewPair
from .concurrency import map_bounded, run_sync
from .container import atomic_write_bytes, container_read, container_write
from .geometry import make_pair, phantom_generate
from .imaging import write_pgm

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
SPLIT_RATIOS = (0.8, 0.1)


class DatasetSummary(BaseModel):
    path: str
    count: int
    splits: Dict[str, int]


def pair_filename(sample_id: int) -> str:
    return f"pair_{sample_id:05d}.ca3d"


def phantom_spec_for(grid_size: int, seed: int = 0) -> PhantomSpec:
    """Raio proporcional ao grid (11 vóxeis em 32)."""
    return PhantomSpec(grid_size=grid_size, radius=grid_size * 11 / 32, seed=seed)


def assign_splits(count: int, seed: int) -> List[Split]:
    """80/10/10 (arredondando treino e validação para baixo) após embaralhar com a semente."""
    n_train = int(SPLIT_RATIOS[0] * count)
    n_val = int(SPLIT_RATIOS[1] * count)
    order = make_rng(seed).permutation(count)
    splits: List[Split] = ["test"] * count
    for rank, sample_id in enumerate(order):
        if rank < n_train:
            splits[sample_id] = "train"
        elif rank < n_train + n_val:
            splits[sample_id] = "val"
    return splits


def _generate_one(
    out_dir: Path,
    entry: ManifestEntry,
    spec: PhantomSpec,
    p_lo: float,
    p_hi: float,
    export_pgm: bool,
) -> None:
    volume = phantom_generate(spec.model_copy(update={"seed": entry.seed}))
    pair = make_pair(volume, sample_id=entry.sample_id, seed=entry.seed, p_lo=p_lo, p_hi=p_hi)
    container_write(out_dir / pair_filename(entry.sample_id), {"cc": pair.cc, "mlo": pair.mlo})
    if export_pgm:
        stem = out_dir / "pgm" / f"pair_{entry.sample_id:05d}"
        write_pgm(f"{stem}_cc.pgm", pair.cc)
        write_pgm(f"{stem}_mlo.pgm", pair.mlo)


async def dataset_generate_async(
    out_dir: Union[str, Path],
    count: int,
    spec: PhantomSpec,
    seed: int,
    p_lo: float = 1.0,
    p_hi: float = 99.0,
    export_pgm: bool = False,
    threads: Optional[int] = None,
) -> DatasetSummary:
    if count < 1:
        raise UsageError(f"dataset_generate: count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CA3DError(f"cannot create dataset directory {out_dir}: {exc}") from exc

    splits = assign_splits(count, seed)
    entries = [
        ManifestEntry(sample_id=index, seed=derive_seed(seed, index), split=splits[index])
        for index in range(count)
    ]
    logger.info("🚀 Generating %d phantom pairs into %s", count, out_dir)
    await map_bounded(
        lambda entry: _generate_one(out_dir, entry, spec, p_lo, p_hi, export_pgm),
        entries,
        limit=threads,
    )
    manifest = "".join(f"{entry.to_line()}\n" for entry in entries)
    atomic_write_bytes(out_dir / MANIFEST_NAME, manifest.encode("utf-8"))

    counts = {name: splits.count(name) for name in ("train", "val", "test")}
    logger.info("✅ Dataset ready: train=%d val=%d test=%d", counts["train"], counts["val"], counts["test"])
    return DatasetSummary(path=str(out_dir), count=count, splits=counts)


def dataset_generate(*args, **kwargs) -> DatasetSummary:
    return run_sync(dataset_generate_async(*args, **kwargs))


def load_manifest(data_dir: Union[str, Path]) -> List[ManifestEntry]:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.is_file():
        raise CA3DError(f"dataset manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    return [ManifestEntry.from_line(line) for line in lines if line.strip()]


def load_pair(data_dir: Union[str, Path], entry: ManifestEntry) -> ViewPair:
    records = container_read(Path(data_dir) / pair_filename(entry.sample_id))
    return ViewPair(cc=records["cc"], mlo=records["mlo"], sample_id=entry.sample_id, seed=entry.seed)


def load_split(data_dir: Union[str, Path], split: Split) -> List[ViewPair]:
    return [load_pair(data_dir, entry) for entry in load_manifest(data_dir) if entry.split == split]
