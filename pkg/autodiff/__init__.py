"""
Autodiff package - dense tensors with reverse-mode differentiation
"""

from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    absolute,
    add,
    as_tensor,
    broadcast_to,
    clip,
    concat,
    cos,
    cumsum,
    div,
    exp,
    expand_dims,
    get_dtype,
    get_precision,
    is_grad_enabled,
    getitem,
    inv,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    norm,
    parameter,
    power,
    precision,
    reshape,
    set_finite_checks,
    set_precision,
    sigmoid,
    sin,
    softplus,
    sqrt,
    stack,
    sub,
    swapaxes,
    transpose,
    tsum,
    unary,
    where,
)
from .graph import Graph, ParamStore, backward, topological_order
from .gradcheck import GradCheckReport, NonDeterministicError, ParamCheck, finite_difference_check

__all__ = [
    'Tensor', 'ParamStore', 'Graph', 'backward', 'topological_order',
    'finite_difference_check', 'GradCheckReport', 'ParamCheck',
    'ShapeError', 'NonFiniteError', 'NonDeterministicError',
    'set_precision', 'get_precision', 'get_dtype', 'precision', 'no_grad', 'is_grad_enabled', 'set_finite_checks',
    'as_tensor', 'parameter', 'unary',
    'add', 'sub', 'mul', 'div', 'neg', 'power', 'matmul', 'inv', 'transpose', 'swapaxes',
    'exp', 'log', 'sin', 'cos', 'absolute', 'sqrt', 'sigmoid', 'softplus', 'clip', 'where',
    'tsum', 'mean', 'cumsum', 'reshape', 'broadcast_to', 'expand_dims', 'getitem',
    'concat', 'stack', 'norm',
]
