"""
Tensor - dense arrays with reverse-mode automatic differentiation.

Every operation produces a new Tensor that remembers its parents and a
vector-Jacobian product (VJP). Values live in numpy arrays; precision is a
process-wide setting (float64 for gradient checks, float32 for training).
"""

import contextlib
import logging
import threading
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

_PRECISIONS = {"float32": np.float32, "float64": np.float64}

_state = {
    "dtype": np.float64,
    "check_finite": True,
}

# recording is per thread so tile workers can render under no_grad independently
_local = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


class ShapeError(ValueError):
    """Operand shapes do not conform to the operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""

    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]]):
        self.op = op
        self.shapes = list(shapes)
        super().__init__(f"non-finite value produced by '{op}' (operand shapes {self.shapes})")


def set_precision(name: str) -> None:
    if name not in _PRECISIONS:
        raise ValueError(f"unknown precision '{name}', expected one of {sorted(_PRECISIONS)}")
    _state["dtype"] = _PRECISIONS[name]


def get_precision() -> str:
    return "float64" if _state["dtype"] == np.float64 else "float32"


def get_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(name: str):
    previous = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording parents (sampling passes, rendering)."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def set_finite_checks(enabled: bool) -> None:
    _state["check_finite"] = bool(enabled)


ArrayLike = Union["Tensor", np.ndarray, float, int]


class Tensor:
    # numpy defers mixed ndarray-Tensor arithmetic to the Tensor operators
    __array_ufunc__ = None
    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_vjp")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        op: str = "leaf",
        _parents: Tuple["Tensor", ...] = (),
        _vjp: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None,
    ):
        self.data = np.asarray(data, dtype=_state["dtype"])
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self._parents = _parents
        self._vjp = _vjp

    # --- introspection -------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    # --- operators -----------------------------------------------------
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(other, self)

    def __getitem__(self, index) -> "Tensor":
        return getitem(self, index)

    # --- method aliases ------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)


def as_tensor(value: ArrayLike) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def parameter(value, name: Optional[str] = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _make(op: str, data: np.ndarray, parents: Tuple[Tensor, ...], vjp) -> Tensor:
    if _state["check_finite"] and not np.all(np.isfinite(data)):
        raise NonFiniteError(op, [p.shape for p in parents])
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, _parents=parents, _vjp=vjp)
    return Tensor(data, op=op)


def _broadcast_shapes(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# --- elementwise binary ------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("add", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", a.data + b.data, (a, b), vjp)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("sub", a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", a.data - b.data, (a, b), vjp)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("mul", a, b)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make("mul", a.data * b.data, (a, b), vjp)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("div", a, b)

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _make("div", a.data / b.data, (a, b), vjp)


def where(condition, a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(condition, dtype=bool)

    def vjp(g):
        return (
            _unbroadcast(np.where(cond, g, 0.0), a.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.shape),
        )

    return _make("where", np.where(cond, a.data, b.data), (a, b), vjp)


# --- elementwise unary -------------------------------------------------

def unary(x: ArrayLike, value: np.ndarray, derivative: np.ndarray, op: str) -> Tensor:
    """Wrap an elementwise function given its value and pointwise derivative."""
    x = as_tensor(x)

    def vjp(g):
        return (g * derivative,)

    return _make(op, value, (x,), vjp)


def neg(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _make("neg", -x.data, (x,), lambda g: (-g,))


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    value = np.exp(x.data)
    return unary(x, value, value, "exp")


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return unary(x, np.log(x.data), 1.0 / x.data, "log")


def sin(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return unary(x, np.sin(x.data), np.cos(x.data), "sin")


def cos(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return unary(x, np.cos(x.data), -np.sin(x.data), "cos")


def absolute(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return unary(x, np.abs(x.data), np.sign(x.data), "abs")


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.sqrt(x.data)
        return unary(x, value, 0.5 / value, "sqrt")


def power(x: ArrayLike, exponent: float) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        return unary(x, x.data ** exponent, exponent * x.data ** (exponent - 1), "pow")


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    value = _sigmoid(x.data)
    return unary(x, value, value * (1.0 - value), "sigmoid")


def softplus(x: ArrayLike, beta: float = 1.0) -> Tensor:
    """log(1 + exp(beta x)) / beta, numerically stable for large |x|."""
    x = as_tensor(x)
    value = np.logaddexp(0.0, beta * x.data) / beta
    return unary(x, value.astype(x.data.dtype), _sigmoid(beta * x.data), "softplus")


def clip(x: ArrayLike, low: float, high: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= low) & (x.data <= high)
    return unary(x, np.clip(x.data, low, high), inside.astype(x.data.dtype), "clip")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    ez = np.exp(z[~positive])
    out[~positive] = ez / (1.0 + ez)
    return out


# --- linear algebra ----------------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError(f"matmul: scalar operand (shapes {a.shape} and {b.shape})")
    inner_a = a.shape[-1]
    inner_b = b.shape[-2] if b.ndim >= 2 else b.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul: inner extents differ (shapes {a.shape} and {b.shape})")
    try:
        value = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: batch extents differ (shapes {a.shape} and {b.shape})") from None

    def vjp(g):
        a_mat = a.data if a.ndim >= 2 else a.data[None, :]
        b_mat = b.data if b.ndim >= 2 else b.data[:, None]
        g_mat = g
        if a.ndim == 1:
            g_mat = np.expand_dims(g_mat, -2)
        if b.ndim == 1:
            g_mat = np.expand_dims(g_mat, -1)
        grad_a = np.matmul(g_mat, np.swapaxes(b_mat, -1, -2))
        grad_b = np.matmul(np.swapaxes(a_mat, -1, -2), g_mat)
        if a.ndim == 1:
            grad_a = grad_a[..., 0, :]
        if b.ndim == 1:
            grad_b = grad_b[..., :, 0]
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _make("matmul", value, (a, b), vjp)


def inv(x: ArrayLike) -> Tensor:
    """Batched matrix inverse over the last two axes."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise ShapeError(f"inv: expected square matrices, got shape {x.shape}")
    value = np.linalg.inv(x.data)

    def vjp(g):
        value_t = np.swapaxes(value, -1, -2)
        return (-np.matmul(np.matmul(value_t, g), value_t),)

    return _make("inv", value, (x,), vjp)


def transpose(x: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def swapaxes(x: ArrayLike, axis1: int, axis2: int) -> Tensor:
    x = as_tensor(x)
    return _make("swapaxes", np.swapaxes(x.data, axis1, axis2), (x,),
                 lambda g: (np.swapaxes(g, axis1, axis2),))


# --- reductions and shape ----------------------------------------------

def tsum(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    value = np.sum(x.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", value, (x,), vjp)


def mean(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    if count == 0:
        return tsum(x, axis=axis, keepdims=keepdims)
    return tsum(x, axis=axis, keepdims=keepdims) / float(count)


def cumsum(x: ArrayLike, axis: int = -1, exclusive: bool = False) -> Tensor:
    """Cumulative sum; the exclusive form starts every run at zero."""
    x = as_tensor(x)
    value = np.cumsum(x.data, axis=axis)
    if exclusive:
        value = value - x.data

    def vjp(g):
        flipped = np.flip(g, axis=axis)
        grad = np.flip(np.cumsum(flipped, axis=axis), axis=axis)
        if exclusive:
            grad = grad - g
        return (grad,)

    return _make("cumsum", value, (x,), vjp)


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        value = np.reshape(x.data, shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {tuple(shape)}") from None
    return _make("reshape", value, (x,), lambda g: (np.reshape(g, x.shape),))


def broadcast_to(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        value = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {tuple(shape)}") from None
    return _make("broadcast_to", value, (x,), lambda g: (_unbroadcast(g, x.shape),))


def expand_dims(x: ArrayLike, axis: int) -> Tensor:
    x = as_tensor(x)
    return _make("expand_dims", np.expand_dims(x.data, axis), (x,),
                 lambda g: (np.reshape(g, x.shape),))


def getitem(x: ArrayLike, index) -> Tensor:
    x = as_tensor(x)
    index = _normalize_index(index)
    value = x.data[index]

    def vjp(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _make("getitem", np.array(value), (x,), vjp)


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat: no operands")
    try:
        value = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]} on axis {axis}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", value, tuple(parts), vjp)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [expand_dims(as_tensor(t), axis) for t in tensors]
    return concat(parts, axis=axis)


def norm(x: ArrayLike, axis: int = -1, keepdims: bool = False, eps: float = 0.0) -> Tensor:
    x = as_tensor(x)
    return sqrt(tsum(x * x, axis=axis, keepdims=keepdims) + eps)


def _normalize_index(index):
    # ufunc.at needs integer arrays in place of boolean masks
    if isinstance(index, np.ndarray) and index.dtype == bool:
        return np.nonzero(index)
    if isinstance(index, tuple):
        parts = []
        for part in index:
            if isinstance(part, np.ndarray) and part.dtype == bool:
                parts.extend(np.nonzero(part))
            else:
                parts.append(part)
        return tuple(parts)
    return index
