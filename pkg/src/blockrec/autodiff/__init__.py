from blockrec.autodiff.tensor import (
    Tensor,
    add,
    add_bias,
    bce_with_logits,
    bmm,
    concat,
    elementwise,
    exp,
    is_grad_enabled,
    matmul,
    maxout,
    mean,
    mul,
    no_grad,
    reshape,
    scale,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    stack,
    sub,
    sum,
    take,
    tanh,
    tile_rows,
    transpose,
)
from blockrec.autodiff.nn import glorot, lstm_cell
from blockrec.autodiff.store import Adam, AdamConfig, ParamStore, adam_step
from blockrec.autodiff.gradcheck import numeric_gradient, relative_error

__all__ = [
    "Adam", "AdamConfig", "ParamStore", "Tensor", "adam_step", "add", "add_bias",
    "bce_with_logits", "bmm", "concat", "elementwise", "exp", "glorot", "is_grad_enabled",
    "lstm_cell", "matmul", "maxout", "mean", "mul", "no_grad", "numeric_gradient",
    "relative_error", "reshape", "scale", "sigmoid", "softmax", "softmax_cross_entropy",
    "stack", "sub", "sum", "take", "tanh", "tile_rows", "transpose",
]
