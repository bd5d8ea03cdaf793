from __future__ import annotations

from typing import Dict, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import UNetConfig

Split = Literal["train", "val", "test"]


class ViewPair(BaseModel):
    """Par casado (CC, MLO) de um mesmo fantoma, com a proveniência."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    cc: np.ndarray
    mlo: np.ndarray
    sample_id: int = Field(..., ge=0)
    seed: int

    @model_validator(mode="after")
    def _same_shape_in_range(self) -> "ViewPair":
        if self.cc.shape != self.mlo.shape or self.cc.ndim != 2:
            raise ValueError(f"cc {self.cc.shape} and mlo {self.mlo.shape} must be equal 2D shapes")
        for name, image in (("cc", self.cc), ("mlo", self.mlo)):
            if image.size and (image.min() < 0.0 or image.max() > 1.0):
                raise ValueError(f"{name} values outside [0, 1]")
        return self


class ManifestEntry(BaseModel):
    sample_id: int = Field(..., ge=0)
    seed: int
    split: Split

    def to_line(self) -> str:
        return f"{self.sample_id}\t{self.seed}\t{self.split}"

    @classmethod
    def from_line(cls, line: str) -> "ManifestEntry":
        sample_id, seed, split = line.rstrip("\n").split("\t")
        return cls(sample_id=int(sample_id), seed=int(seed), split=split)


class SampleMetrics(BaseModel):
    sample_id: str
    psnr: float = Field(..., ge=0)
    ssim: float = Field(..., ge=-1.0, le=1.0)


class MetricReport(BaseModel):
    """Métricas por amostra de uma direção de tradução, com média e desvio."""

    direction: str
    samples: List[SampleMetrics] = Field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def psnr_mean(self) -> float:
        return float(np.mean([s.psnr for s in self.samples])) if self.samples else 0.0

    @property
    def psnr_std(self) -> float:
        return float(np.std([s.psnr for s in self.samples])) if self.samples else 0.0

    @property
    def ssim_mean(self) -> float:
        return float(np.mean([s.ssim for s in self.samples])) if self.samples else 0.0

    @property
    def ssim_std(self) -> float:
        return float(np.std([s.ssim for s in self.samples])) if self.samples else 0.0

    def summary(self) -> Dict[str, float]:
        return {
            "count": self.count,
            "psnr_mean": self.psnr_mean,
            "psnr_std": self.psnr_std,
            "ssim_mean": self.ssim_mean,
            "ssim_std": self.ssim_std,
        }


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""

    def render(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}\t{self.name}\t{self.detail}".rstrip()


class ScheduleParams(BaseModel):
    timesteps: int = Field(..., ge=1)
    beta_start: float
    beta_end: float


class ModelCheckpoint(BaseModel):
    """Metadados do checkpoint; os tensores de parâmetros ficam nos registros do container."""

    unet: UNetConfig
    schedule: ScheduleParams
    step: int = Field(default=0, ge=0)
    seed: int = 0
    parameter_names: List[str] = Field(default_factory=list)
    format: Literal["ca3d-checkpoint"] = "ca3d-checkpoint"
