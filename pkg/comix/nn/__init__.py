# comix/nn: минимальный движок автодифференцирования и слои
from .tensor import Tensor, concat, no_grad, stack, stop_gradient
from .layers import (BiGRU, GRUCell, LayerNorm, LayerSpec, Linear, MLP, Module,
                     Parameters, build_layer, linear)
from .optim import RMSprop

__all__ = [
    "Tensor", "concat", "stack", "no_grad", "stop_gradient",
    "LayerSpec", "Linear", "MLP", "GRUCell", "BiGRU", "LayerNorm", "Module",
    "Parameters", "build_layer", "linear", "RMSprop",
]
