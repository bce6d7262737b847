from .module import Module, parameter
from .optim import Adam, sgd_adam_step
from .tensor import (
    DecisionTape,
    Tensor,
    add,
    arcosh,
    as_tensor,
    audit_backward,
    backward,
    concat,
    conv1d,
    conv2d,
    cos,
    decision,
    div,
    exp,
    gather_rows,
    layer_norm,
    log,
    matmul,
    max_reduce,
    mean_reduce,
    min_reduce,
    mul,
    nearest_sqdist,
    neg,
    pairwise_sqdist,
    record_decisions,
    relu,
    repeat_rows,
    replay_decisions,
    reshape,
    sin,
    slice_,
    softmax,
    sqrt,
    sub,
    sum_reduce,
    transpose,
)

__all__ = [
    "Adam",
    "DecisionTape",
    "Module",
    "Tensor",
    "add",
    "arcosh",
    "as_tensor",
    "audit_backward",
    "backward",
    "concat",
    "conv1d",
    "conv2d",
    "cos",
    "decision",
    "div",
    "exp",
    "gather_rows",
    "layer_norm",
    "log",
    "matmul",
    "max_reduce",
    "mean_reduce",
    "min_reduce",
    "mul",
    "nearest_sqdist",
    "neg",
    "pairwise_sqdist",
    "parameter",
    "record_decisions",
    "relu",
    "repeat_rows",
    "replay_decisions",
    "reshape",
    "sgd_adam_step",
    "sin",
    "slice_",
    "softmax",
    "sqrt",
    "sub",
    "sum_reduce",
    "transpose",
]
