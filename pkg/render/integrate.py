"""
Volume-rendering quadrature and foreground/background compositing.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from autodiff import Tensor, as_tensor, cumsum, exp, expand_dims, tsum


class QuadratureError(ValueError):
    """Sample intervals are negative (depths out of order)."""


def _check_intervals(deltas: np.ndarray, what: str) -> None:
    if np.any(np.asarray(deltas) < 0):
        raise QuadratureError(f"{what}: negative sample interval (samples not sorted by depth)")


def quadrature(sigma, deltas: np.ndarray) -> Tensor:
    """Per-sample weights tau_i = T_i (1 - exp(-sigma_i delta_i)) along the last axis."""
    optical = as_tensor(sigma) * np.asarray(deltas)
    transmittance = exp(-cumsum(optical, axis=-1, exclusive=True))
    return transmittance * (1.0 - exp(-optical))


def integrate_human(deltas: np.ndarray, sigma, colors) -> Tuple[Tensor, Tensor, Tensor]:
    """(C^H, alpha^H, tau) for (R, N) densities and (R, N, 3) colors."""
    _check_intervals(deltas, "integrate_human")
    tau = quadrature(sigma, deltas)
    color = tsum(expand_dims(tau, -1) * as_tensor(colors), axis=-2)
    return color, tsum(tau, axis=-1), tau


def integrate_background(deltas: np.ndarray, sigma, colors) -> Tensor:
    """C^B for samples ordered by increasing radius; the last interval stands in for infinity."""
    _check_intervals(deltas, "integrate_background")
    tau = quadrature(sigma, deltas)
    return tsum(expand_dims(tau, -1) * as_tensor(colors), axis=-2)


def composite(color_human, opacity, color_background) -> Tensor:
    """C = C^H + (1 - alpha^H) C^B."""
    return as_tensor(color_human) + expand_dims(1.0 - as_tensor(opacity), -1) * as_tensor(color_background)


@dataclass
class RenderResult:
    color: Tensor
    color_human: Tensor
    color_background: Tensor
    opacity: Tensor
    weights: Tensor

    def numpy(self) -> dict:
        return {
            "color": np.array(self.color.data),
            "color_human": np.array(self.color_human.data),
            "color_background": np.array(self.color_background.data),
            "opacity": np.array(self.opacity.data),
        }
