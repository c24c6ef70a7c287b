"""Tensor math, gradients, optimizer and checkpoint blobs"""

from .tensor import (Tape, Tensor, add, as_tensor, clamp, concat, einsum, elu, exp, gather_rows,
                     identity, index, leaky_relu, log, log_sigmoid, log_softmax, matmul, mean, mul,
                     neg, reshape, sigmoid, softmax, stack, sub, sum_)
from .optim import AdamState, adam_step
from .gradcheck import grad_check, grad_check_report

__all__ = [
    "Tape", "Tensor", "add", "as_tensor", "clamp", "concat", "einsum", "elu", "exp", "gather_rows",
    "identity", "index", "leaky_relu", "log", "log_sigmoid", "log_softmax", "matmul", "mean", "mul",
    "neg", "reshape", "sigmoid", "softmax", "stack", "sub", "sum_", "AdamState", "adam_step",
    "grad_check", "grad_check_report",
]
