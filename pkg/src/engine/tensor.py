"""Tensor denso com diferenciação automática em modo reverso.

Os dados vivem num ``numpy.ndarray`` contíguo (row-major, float32 por
padrão). Cada operação registra os pais e uma função de retropropagação;
``Tensor.backward`` percorre o grafo em ordem topológica reversa.
"""

from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .. import settings
from ..errors import GradientError, NumericalError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_dtype_var: contextvars.ContextVar[type] = contextvars.ContextVar("ca3d_dtype", default=np.float32)
_grad_enabled_var: contextvars.ContextVar[bool] = contextvars.ContextVar("ca3d_grad", default=True)


def get_default_dtype() -> type:
    return _dtype_var.get()


def is_grad_enabled() -> bool:
    return _grad_enabled_var.get()


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Troca o dtype padrão dentro do bloco (usado pelas checagens de gradiente)."""
    token = _dtype_var.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _dtype_var.reset(token)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    token = _grad_enabled_var.set(False)
    try:
        yield
    finally:
        _grad_enabled_var.reset(token)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=get_default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = "leaf"

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: Tuple["Tensor", ...],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=get_default_dtype())
        out.grad = None
        out.name = None
        out._op = op
        out.requires_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        if settings.CA3D_DEBUG_NUMERICS and not np.all(np.isfinite(out.data)):
            if all(np.all(np.isfinite(p.data)) for p in parents):
                raise NumericalError(f"{op}: non-finite output from finite inputs")
        return out

    # ------------------------------------------------------------------ #
    #  Informações básicas                                               #
    # ------------------------------------------------------------------ #

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def op(self) -> str:
        return self._op

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise GradientError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    # ------------------------------------------------------------------ #
    #  Retropropagação                                                   #
    # ------------------------------------------------------------------ #

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        if self.data.size != 1:
            raise GradientError(f"backward: loss must be a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise GradientError("backward: loss does not depend on any tensor requiring grad")

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    # ------------------------------------------------------------------ #
    #  Operadores                                                        #
    # ------------------------------------------------------------------ #

    def __add__(self, other) -> "Tensor":
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        from . import functional as F

        return F.sub(other, self)

    def __mul__(self, other) -> "Tensor":
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        from . import functional as F

        return F.div(self, other)

    def __neg__(self) -> "Tensor":
        from . import functional as F

        return F.neg(self)

    def __matmul__(self, other) -> "Tensor":
        from . import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        from . import functional as F

        return F.getitem(self, index)

    def reshape(self, *shape) -> "Tensor":
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        from . import functional as F

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)
