"""
Frequency encoding of coordinates with its per-feature input derivative.
"""

import numpy as np

from autodiff import Tensor, as_tensor, concat, cos, sin


class FrequencyEncoding:
    """
    x -> [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]

    Every feature depends on exactly one input coordinate: feature j reads
    coordinate j % input_dim.
    """

    def __init__(self, input_dim: int, n_octaves: int):
        if input_dim < 1 or n_octaves < 0:
            raise ValueError(f"invalid encoding ({input_dim} inputs, {n_octaves} octaves)")
        self.input_dim = input_dim
        self.n_octaves = n_octaves
        self.frequencies = (2.0 ** np.arange(n_octaves)) * np.pi

    @property
    def output_dim(self) -> int:
        return self.input_dim * (2 * self.n_octaves + 1)

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        parts = [x]
        for freq in self.frequencies:
            parts.append(sin(x * freq))
            parts.append(cos(x * freq))
        return concat(parts, axis=-1)

    def derivative(self, x) -> Tensor:
        """d feature_j / d x_{j % input_dim}, shape (..., output_dim)."""
        x = as_tensor(x)
        parts = [as_tensor(np.ones_like(x.data))]
        for freq in self.frequencies:
            parts.append(cos(x * freq) * freq)
            parts.append(sin(x * freq) * (-freq))
        return concat(parts, axis=-1)

    def input_gradient(self, x, feature_gradient: Tensor) -> Tensor:
        """Chain a gradient w.r.t. the features back to the raw coordinates."""
        x = as_tensor(x)
        blocks = 2 * self.n_octaves + 1
        per_feature = feature_gradient * self.derivative(x)
        lead = per_feature.shape[:-1]
        return per_feature.reshape(lead + (blocks, self.input_dim)).sum(axis=-2)
