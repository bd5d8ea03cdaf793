from .nn import Conv2d, Conv3d, Embedding, GroupNorm, Linear, Module, Parameter
from .optim import AdamW, LambdaLinearSchedule, OptimizerState
from .rng import derive_seed, make_rng
from .tensor import Tensor, as_tensor, no_grad, precision

__all__ = [
    "AdamW",
    "Conv2d",
    "Conv3d",
    "Embedding",
    "GroupNorm",
    "LambdaLinearSchedule",
    "Linear",
    "Module",
    "OptimizerState",
    "Parameter",
    "Tensor",
    "as_tensor",
    "derive_seed",
    "make_rng",
    "no_grad",
    "precision",
]
