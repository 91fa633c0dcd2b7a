"""
Graph and ParamStore - reverse accumulation over recorded operations.
"""

import logging
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .tensor import NonFiniteError, ShapeError, Tensor, get_dtype

logger = logging.getLogger(__name__)


class ParamStore:
    """
    Named parameter tensors with a gradient slot each.

    Iteration follows insertion order, so identical construction gives an
    identical order across runs.
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self.grads: Dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter '{name}' already registered")
        tensor = Tensor(np.array(value, dtype=get_dtype()), requires_grad=True, name=name)
        self._params[name] = tensor
        self.grads[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def zero_grad(self) -> None:
        for name, tensor in self._params.items():
            self.grads[name] = np.zeros_like(tensor.data)

    def set_trainable(self, prefix: str, trainable: bool) -> None:
        for name, tensor in self._params.items():
            if name.startswith(prefix):
                tensor.requires_grad = trainable

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = [name for name in self._params if name not in state]
        if missing:
            raise KeyError(f"state is missing parameters: {missing}")
        for name, tensor in self._params.items():
            value = np.asarray(state[name], dtype=get_dtype())
            if value.shape != tensor.shape:
                raise ShapeError(f"parameter '{name}': stored shape {value.shape} != {tensor.shape}")
            tensor.data = value.copy()

    def num_values(self) -> int:
        return int(sum(t.size for t in self._params.values()))


class Graph:
    """
    A recorded forward evaluation from parameters/inputs to a scalar loss.

    Nodes are ordered by an iterative post-order walk over parents, which
    is deterministic for a given construction; backward visits each node
    exactly once in reverse of that order.
    """

    def __init__(self):
        self.output: Optional[Tensor] = None
        self.nodes: List[Tensor] = []

    def forward(self, fn: Callable[..., Tensor], *inputs, **kwargs) -> Tensor:
        self.output = fn(*inputs, **kwargs)
        self.nodes = topological_order(self.output)
        return self.output

    def backward(self, loss: Optional[Tensor] = None, store: Optional[ParamStore] = None) -> Dict[int, np.ndarray]:
        loss = loss if loss is not None else self.output
        if loss is None:
            raise RuntimeError("backward called before forward")
        if loss is not self.output or not self.nodes:
            self.output = loss
            self.nodes = topological_order(loss)
        return _accumulate(loss, self.nodes, store)


def topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, store: Optional[ParamStore] = None) -> Dict[int, np.ndarray]:
    """Populate gradients of a scalar loss; unreachable parameters get zeros."""
    return Graph().backward(loss, store)


def _accumulate(loss: Tensor, nodes: List[Tensor], store: Optional[ParamStore]) -> Dict[int, np.ndarray]:
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(nodes):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NonFiniteError(f"backward:{node.op}", [p.shape for p in node._parents])
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.array(pg, dtype=parent.data.dtype)
        if node is not loss and node._parents:
            # interior adjoints are no longer needed once propagated
            del grads[id(node)]
    if store is not None:
        for name, tensor in store.items():
            g = grads.get(id(tensor))
            store.grads[name] = np.zeros_like(tensor.data) if g is None else np.reshape(g, tensor.shape).astype(tensor.data.dtype)
            tensor.grad = store.grads[name]
    return grads
