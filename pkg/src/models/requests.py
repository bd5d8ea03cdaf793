from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class DatasetRequest(BaseModel):
    """Parâmetros para gerar um conjunto de pares sintéticos em disco."""

    out_dir: str = Field(..., description="Diretório de saída do conjunto")
    count: int = Field(default=100, ge=1, description="Número de pares")
    size: int = Field(default=32, ge=4, description="Lado do grid do fantoma")
    seed: int = 0
    export_pgm: bool = False


class EvaluateRequest(BaseModel):
    """Avaliação de um checkpoint (ou de um modo diagnóstico) sobre um split."""

    data_dir: str = Field(..., description="Diretório do conjunto gerado")
    checkpoint: Optional[str] = Field(default=None, description="Checkpoint .ca3d; opcional nos modos diagnósticos")
    split: Literal["train", "val", "test"] = "test"
    mode: Literal["model", "ground-truth", "copy-reference"] = "model"
    steps: int = Field(default=50, ge=1)
    guidance: float = 3.0
    seed: int = 0
