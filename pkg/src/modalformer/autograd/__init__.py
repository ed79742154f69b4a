from . import ops
from .conv import conv2d, transposed_conv2d
from .gradcheck import grad_check, numeric_grad, relative_error, tensor_relative_error
from .ops import (
    FlopCounter,
    add,
    concat,
    gelu,
    layer_norm,
    matmul,
    mean,
    mul,
    reshape,
    scale,
    sigmoid,
    softmax,
    split,
    sub,
    transpose,
)
from .tensor import NonFiniteError, ShapeError, Tape, Tensor, active_tape, backward, no_record

__all__ = [
    "FlopCounter",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Tensor",
    "active_tape",
    "add",
    "backward",
    "concat",
    "conv2d",
    "gelu",
    "grad_check",
    "layer_norm",
    "matmul",
    "mean",
    "mul",
    "no_record",
    "numeric_grad",
    "ops",
    "relative_error",
    "tensor_relative_error",
    "reshape",
    "scale",
    "sigmoid",
    "softmax",
    "split",
    "sub",
    "transpose",
    "transposed_conv2d",
]
