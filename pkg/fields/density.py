"""
SDF to density - scaled Laplace CDF of the negated signed distance.
"""

import numpy as np

from autodiff import ParamStore, Tensor, absolute, as_tensor, exp, where


class DensityParams:
    """alpha and beta, stored as log-values so both stay strictly positive."""

    def __init__(self, store: ParamStore, alpha: float = 50.0, beta: float = 0.05):
        if alpha <= 0 or beta <= 0:
            raise ValueError(f"alpha and beta must be positive (got {alpha}, {beta})")
        self.log_alpha = store.add("density.log_alpha", np.log(alpha))
        self.log_beta = store.add("density.log_beta", np.log(beta))

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.data))

    @property
    def beta(self) -> float:
        return float(np.exp(self.log_beta.data))

    def __call__(self, sdf) -> Tensor:
        return sdf_to_density(sdf, exp(self.log_alpha), exp(self.log_beta))


def sdf_to_density(sdf, alpha, beta) -> Tensor:
    """
    sigma = alpha * (1/2 + 1/2 sign(xi) (1 - exp(-|xi| / beta))), xi = -sdf.

    Written as two branches so the value at the surface is exactly alpha / 2
    and the function is continuous there.
    """
    xi = -as_tensor(sdf)
    decay = exp(-absolute(xi) / beta)
    cdf = where(xi.data >= 0, 1.0 - 0.5 * decay, 0.5 * decay)
    return alpha * cdf


def laplace_density(sdf: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    xi = -np.asarray(sdf, dtype=np.float64)
    decay = np.exp(-np.abs(xi) / beta)
    return alpha * np.where(xi >= 0, 1.0 - 0.5 * decay, 0.5 * decay)
