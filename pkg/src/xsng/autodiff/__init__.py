"""Reverse-mode automatic differentiation on float64 arrays."""

from .gradcheck import grad_check
from .ops import (
    absolute,
    add,
    add_rowvec,
    add_scalar,
    clamp_min,
    concat_cols,
    conv1d,
    conv2d,
    gather_rows,
    gradient_reversal,
    layer_norm,
    leaky_relu,
    log,
    matmul,
    mean_all,
    mean_rows,
    mul,
    mul_rowvec,
    neg,
    pick,
    relu,
    repeat_rows,
    reshape,
    scale,
    slice_cols,
    slice_rows,
    softmax,
    square,
    sub,
    sum_all,
    transpose,
)
from .tensor import Tape, Tensor, as_tensor, backward, current_tape, grad_of

__all__ = [
    "Tape", "Tensor", "as_tensor", "backward", "current_tape", "grad_of",
    "grad_check",
    "absolute", "add", "add_rowvec", "add_scalar", "clamp_min", "concat_cols",
    "conv1d", "conv2d", "gather_rows", "gradient_reversal", "layer_norm",
    "leaky_relu", "log", "matmul", "mean_all", "mean_rows", "mul",
    "mul_rowvec", "neg", "pick", "relu", "repeat_rows", "reshape", "scale",
    "slice_cols", "slice_rows", "softmax", "square", "sub", "sum_all",
    "transpose",
]
