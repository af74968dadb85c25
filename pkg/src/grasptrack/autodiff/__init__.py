from .tensor import (
    ShapeMismatch,
    Tensor,
    add,
    as_tensor,
    avgpool,
    concat,
    conv2d,
    getitem,
    grad_enabled,
    layer_norm,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    scaled_dot_attention,
    set_debug_checks,
    sigmoid,
    softmax,
    sub,
    sum_,
    tanh,
    transpose,
    upsample2x,
    weighted_bce_with_logits,
)
from .checkpoint import CheckpointError, load_params, save_params

__all__ = [
    "ShapeMismatch",
    "Tensor",
    "add",
    "as_tensor",
    "avgpool",
    "concat",
    "conv2d",
    "getitem",
    "grad_enabled",
    "layer_norm",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "scaled_dot_attention",
    "set_debug_checks",
    "sigmoid",
    "softmax",
    "sub",
    "sum_",
    "tanh",
    "transpose",
    "upsample2x",
    "weighted_bce_with_logits",
    "CheckpointError",
    "load_params",
    "save_params",
]
