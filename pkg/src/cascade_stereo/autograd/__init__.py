"""Minimal numpy-backed tensor library with reverse-mode differentiation."""

from .tensor import (
    Tensor, absolute, add, as_tensor, backward, build_tape, clip, concat, default_dtype, div, elu, exp,
    get_default_dtype, getitem, is_grad_enabled, log, matmul, mean, mul, neg, no_grad, pad2d, power,
    relu, reshape, sigmoid, softmax, split, stack, sub, tanh, transpose, tsum,
)
from .functional import avg_pool2d, conv2d, grid_sample, grid_sample_bilinear, instance_norm, resize_bilinear
from .nn import Conv2d, Module, Parameter, zero_module
from .optim import Adam, clip_grad_norm
from .checkpoint import load_checkpoint, read_manifest, save_checkpoint
from .gradcheck import gradcheck, numerical_grad, relative_error

__all__ = [name for name in dir() if not name.startswith("_")]
