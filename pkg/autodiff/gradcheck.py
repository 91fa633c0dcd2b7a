"""
Finite-difference verification of analytic gradients.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .graph import ParamStore, backward
from .tensor import Tensor

logger = logging.getLogger(__name__)


class NonDeterministicError(RuntimeError):
    """Two evaluations of the checked function disagree."""


@dataclass
class ParamCheck:
    name: str
    checked_entries: int
    max_relative_error: float
    max_abs_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    entries: List[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def max_relative_error(self) -> float:
        return max((e.max_relative_error for e in self.entries), default=0.0)

    def as_rows(self) -> List[Dict[str, object]]:
        return [
            {
                "parameter": e.name,
                "entries": e.checked_entries,
                "max_rel_err": e.max_relative_error,
                "max_abs_err": e.max_abs_error,
                "status": "PASS" if e.passed else "FAIL",
            }
            for e in self.entries
        ]


def finite_difference_check(
    f: Callable[[], Tensor],
    store: ParamStore,
    step: float = 1e-5,
    tolerance: float = 1e-5,
    names: Optional[Sequence[str]] = None,
    max_entries_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    denominator_floor: float = 1e-4,
) -> GradCheckReport:
    """
    Compare analytic gradients of f against central differences.

    f reads the store's parameters and returns a scalar Tensor. The relative
    error of one entry is |analytic - numeric| / max(|analytic|, |numeric|,
    denominator_floor). With max_entries_per_param, a random subset of each
    parameter's entries is probed.
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    report = GradCheckReport(tolerance=tolerance, step=step)
    selected = list(names) if names is not None else store.names()
    if not selected:
        return report

    first = f()
    second = f()
    if not np.array_equal(first.data, second.data):
        raise NonDeterministicError(
            f"checked function is not deterministic ({float(first.data)} vs {float(second.data)})"
        )

    store.zero_grad()
    backward(first, store)
    analytic = {name: store.grads[name].copy() for name in selected}
    rng = rng if rng is not None else np.random.default_rng(0)

    for name in selected:
        tensor = store[name]
        flat = tensor.data.flat
        indices = np.arange(tensor.size)
        if max_entries_per_param is not None and tensor.size > max_entries_per_param:
            indices = np.sort(rng.choice(tensor.size, size=max_entries_per_param, replace=False))
        grad_flat = analytic[name].reshape(-1)
        worst_rel, worst_abs = 0.0, 0.0
        for idx in indices:
            original = flat[idx]
            flat[idx] = original + step
            plus = float(f().data)
            flat[idx] = original - step
            minus = float(f().data)
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * step)
            a = float(grad_flat[idx])
            abs_err = abs(a - numeric)
            rel_err = abs_err / max(abs(a), abs(numeric), denominator_floor)
            worst_rel = max(worst_rel, rel_err)
            worst_abs = max(worst_abs, abs_err)
        passed = worst_rel <= tolerance
        if not passed:
            logger.warning(f"[GRADCHECK] {name}: max relative error {worst_rel:.3e} > {tolerance:.1e}")
        report.entries.append(ParamCheck(name, int(len(indices)), worst_rel, worst_abs, passed))
    return report
