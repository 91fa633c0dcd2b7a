"""
Adam - bias-corrected adaptive-moment updates over a ParamStore.

Learning rates are grouped by parameter-name prefix (fields, per-frame poses,
background latents); the longest matching prefix wins.
"""

import logging
import math
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from autodiff import ParamStore

logger = logging.getLogger(__name__)


class NonFiniteGradientError(FloatingPointError):
    """A parameter gradient contains NaN or Inf; the step was not applied."""


class Adam:
    def __init__(
        self,
        store: ParamStore,
        lr: float = 5e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        lr_groups: Optional[Dict[str, float]] = None,
        names: Optional[Iterable[str]] = None,
        schedule: str = "constant",
        total_steps: Optional[int] = None,
    ):
        if schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown learning-rate schedule '{schedule}'")
        if schedule == "cosine" and not total_steps:
            raise ValueError("cosine schedule needs total_steps")
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.lr_groups = dict(lr_groups or {})
        self.names = list(names) if names is not None else store.names()
        self.schedule = schedule
        self.total_steps = total_steps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        for name in self.names:
            self.m[name] = np.zeros_like(store[name].data)
            self.v[name] = np.zeros_like(store[name].data)

    def lr_for(self, name: str) -> float:
        best, rate = -1, self.lr
        for prefix, group_rate in self.lr_groups.items():
            if name.startswith(prefix) and len(prefix) > best:
                best, rate = len(prefix), group_rate
        return rate

    def schedule_factor(self, step: int) -> float:
        if self.schedule == "constant":
            return 1.0
        progress = min(step, self.total_steps) / self.total_steps
        return 0.5 * (1.0 + math.cos(math.pi * progress))

    def step(self, grads: Optional[Dict[str, np.ndarray]] = None) -> None:
        grads = grads if grads is not None else self.store.grads
        for name in self.names:
            if not np.all(np.isfinite(grads[name])):
                raise NonFiniteGradientError(f"non-finite gradient for parameter '{name}' at step {self.t + 1}")
            if grads[name].shape != self.store[name].shape:
                raise ValueError(f"gradient shape {grads[name].shape} != parameter '{name}' {self.store[name].shape}")

        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        factor = self.schedule_factor(self.t - 1)
        for name in self.names:
            param = self.store[name]
            if not param.requires_grad:
                continue
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            step_size = factor * self.lr_for(name) / bc1
            param.data = (param.data - step_size * m / (np.sqrt(v / bc2) + self.eps)).astype(param.data.dtype)

    def state_dict(self) -> Dict[str, object]:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()}, "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state: Dict[str, object]) -> None:
        self.t = int(state["t"])
        for name in self.names:
            self.m[name] = np.array(state["m"][name], dtype=self.store[name].data.dtype)
            self.v[name] = np.array(state["v"][name], dtype=self.store[name].data.dtype)


def adam_step(optimizer: Adam, grads: Optional[Dict[str, np.ndarray]] = None) -> None:
    optimizer.step(grads)
