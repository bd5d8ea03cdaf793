from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ShapeError
from . import functional as F
from .tensor import Tensor


class Parameter(Tensor):
    """Tensor folha treinável."""

    __slots__ = ()

    def __init__(self, data, name: Optional[str] = None) -> None:
        super().__init__(np.asarray(data, dtype=np.float32), requires_grad=True, name=name)


def fan_in_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, gain: float = 1.0) -> np.ndarray:
    bound = gain / math.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    """Base mínima: descobre parâmetros e submódulos pelos atributos."""

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{index}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{index}", item

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(param.size for param in self.parameters()))

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = np.zeros_like(param.data)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: param.data for name, param in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = dict(self.named_parameters())
        missing = sorted(set(expected) - set(state))
        unexpected = sorted(set(state) - set(expected))
        if missing or unexpected:
            raise ShapeError(
                "load_state_dict",
                detail=f"missing={missing[:5]} unexpected={unexpected[:5]}",
            )
        for name, param in expected.items():
            value = np.asarray(state[name], dtype=np.float32)
            if value.shape != param.shape:
                raise ShapeError(f"load_state_dict[{name}]", param.shape, value.shape)
            param.data = value.copy()
            param.grad = None


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True) -> None:
        self.weight = Parameter(fan_in_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features, dtype=np.float32)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: Optional[int] = None,
        gain: float = 1.0,
    ) -> None:
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(
            fan_in_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, gain)
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Conv3d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator) -> None:
        self.padding = kernel_size // 2
        fan_in = in_channels * kernel_size**3
        self.weight = Parameter(
            fan_in_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size, kernel_size), fan_in)
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv3d(x, self.weight, self.bias, padding=self.padding)


class GroupNorm(Module):
    def __init__(self, groups: int, channels: int, eps: float = 1e-5) -> None:
        if channels % groups:
            raise ShapeError("GroupNorm", (channels,), (groups,), detail="channels not divisible by groups")
        self.groups = groups
        self.eps = eps
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.groups, self.weight, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, rows: int, dim: int, rng: np.random.Generator) -> None:
        self.weight = Parameter(fan_in_uniform(rng, (rows, dim), dim))

    def forward(self, indices: np.ndarray) -> Tensor:
        return F.embedding(self.weight, indices)
