from __future__ import annotations

import logging
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import GradientError
from .nn import Parameter

logger = logging.getLogger(__name__)


class OptimizerState(BaseModel):
    """Estado do AdamW: taxa, momentos por parâmetro e contador de passos."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    lr: float = Field(..., gt=0)
    weight_decay: float = Field(default=0.0, ge=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)
    step: int = Field(default=0, ge=0)
    exp_avg: Dict[str, np.ndarray] = Field(default_factory=dict)
    exp_avg_sq: Dict[str, np.ndarray] = Field(default_factory=dict)


class LambdaLinearSchedule(BaseModel):
    """Aquecimento linear até a taxa base, depois interpolação linear até ``final_factor``."""

    warmup_steps: int = Field(default=100, ge=0)
    start_factor: float = Field(default=1e-3, gt=0, le=1)
    final_factor: float = Field(default=1.0, ge=0)
    total_steps: int = Field(default=1, ge=1)

    def factor(self, step: int) -> float:
        if self.warmup_steps and step < self.warmup_steps:
            return self.start_factor + (1.0 - self.start_factor) * step / self.warmup_steps
        remaining = max(1, self.total_steps - self.warmup_steps)
        progress = min(1.0, (step - self.warmup_steps) / remaining)
        return 1.0 + (self.final_factor - 1.0) * progress


class AdamW:
    """Momentos adaptativos com decaimento de peso desacoplado."""

    def __init__(
        self,
        named_params: Iterable[Tuple[str, Parameter]],
        lr: float = 1e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        schedule: Optional[LambdaLinearSchedule] = None,
    ) -> None:
        self.params = list(named_params)
        self.schedule = schedule
        self.state = OptimizerState(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        for name, param in self.params:
            self.state.exp_avg[name] = np.zeros_like(param.data)
            self.state.exp_avg_sq[name] = np.zeros_like(param.data)

    def current_lr(self) -> float:
        if self.schedule is None:
            return self.state.lr
        return self.state.lr * self.schedule.factor(self.state.step)

    def zero_grad(self) -> None:
        for _, param in self.params:
            param.grad = np.zeros_like(param.data)

    def step(self) -> None:
        for name, param in self.params:
            if param.grad is None:
                raise GradientError(f"optimizer_step: missing gradient for parameter '{name}'")

        lr = self.current_lr()
        self.state.step += 1
        t = self.state.step
        beta1, beta2 = self.state.betas
        bias1 = 1.0 - beta1**t
        bias2 = 1.0 - beta2**t
        decay = 1.0 - lr * self.state.weight_decay

        for name, param in self.params:
            grad = param.grad.astype(param.data.dtype, copy=False)
            m = beta1 * self.state.exp_avg[name] + (1.0 - beta1) * grad
            v = beta2 * self.state.exp_avg_sq[name] + (1.0 - beta2) * grad * grad
            self.state.exp_avg[name] = m
            self.state.exp_avg_sq[name] = v
            updated = param.data * decay if self.state.weight_decay else param.data
            param.data = (updated - lr * (m / bias1) / (np.sqrt(v / bias2) + self.state.eps)).astype(
                param.data.dtype, copy=False
            )
