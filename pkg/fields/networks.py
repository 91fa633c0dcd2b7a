"""
Neural Fields - canonical shape, canonical texture and background networks.

All three are plain MLPs over a shared ParamStore. The shape network also
exposes its spatial gradient as a recorded computation, so losses on the
gradient (Eikonal term, deformed normals) differentiate through it with
first-order reverse mode only.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from autodiff import (
    ParamStore,
    Tensor,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    getitem,
    matmul,
    mean,
    no_grad,
    reshape,
    sigmoid,
    softplus,
    transpose,
)

from .density import DensityParams
from .encoding import FrequencyEncoding

logger = logging.getLogger(__name__)


class UnknownFrameError(KeyError):
    """A background latent was requested for a frame that was never trained."""


class FieldConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sdf_hidden: int = Field(128, ge=1)
    sdf_layers: int = Field(4, ge=1)
    feature_dim: int = Field(64, ge=0)
    sdf_octaves: int = Field(6, ge=0)
    texture_hidden: int = Field(128, ge=1)
    texture_layers: int = Field(3, ge=1)
    background_hidden: int = Field(128, ge=1)
    background_layers: int = Field(4, ge=1)
    background_octaves: int = Field(10, ge=0)
    view_octaves: int = Field(4, ge=0)
    latent_dim: int = Field(8, ge=1)
    softplus_beta: float = Field(100.0, gt=0)
    init_radius: float = Field(0.5, gt=0)
    geometric_init_fit_steps: int = Field(200, ge=0)
    geometric_init_fit_lr: float = Field(1e-3, gt=0)
    geometric_init_fit_points: int = Field(1024, ge=1)
    alpha_init: float = Field(50.0, gt=0)
    beta_init: float = Field(0.05, gt=0)
    seed: int = 0


class MLP:
    """Fully connected network with softplus hidden activations and a linear head."""

    def __init__(self, store: ParamStore, prefix: str, dims: Sequence[int], rng: np.random.Generator,
                 softplus_beta: float = 100.0):
        if len(dims) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        self.prefix = prefix
        self.dims = list(dims)
        self.beta = softplus_beta
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        for i, (d_in, d_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            w = rng.normal(0.0, np.sqrt(2.0) / np.sqrt(d_out), size=(d_in, d_out))
            self.weights.append(store.add(f"{prefix}.w{i}", w))
            self.biases.append(store.add(f"{prefix}.b{i}", np.zeros(d_out)))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, h) -> Tensor:
        h = as_tensor(h)
        for i in range(self.n_layers):
            h = matmul(h, self.weights[i]) + self.biases[i]
            if i < self.n_layers - 1:
                h = softplus(h, self.beta)
        return h

    __call__ = forward

    def forward_with_input_grad(self, h, output_index: int = 0) -> Tuple[Tensor, Tensor]:
        """
        Outputs plus d output[:, output_index] / d input, both recorded.

        The backward sweep is written out with tensor ops (softplus' = sigmoid),
        so the returned gradient is itself differentiable w.r.t. weights and
        inputs.
        """
        h = as_tensor(h)
        pre_activations: List[Tensor] = []
        for i in range(self.n_layers):
            z = matmul(h, self.weights[i]) + self.biases[i]
            if i < self.n_layers - 1:
                pre_activations.append(z)
                h = softplus(z, self.beta)
            else:
                h = z
        m = h.shape[0]
        head = getitem(self.weights[-1], (slice(None), output_index))
        grad = broadcast_to(reshape(head, (1, head.shape[0])), (m, head.shape[0]))
        for i in range(self.n_layers - 2, -1, -1):
            grad = grad * sigmoid(pre_activations[i] * self.beta)
            grad = matmul(grad, transpose(self.weights[i]))
        return h, grad


class HumanShapeField:
    """Canonical SDF network: enc(x_c) + theta -> (sdf, feature z)."""

    def __init__(self, store: ParamStore, n_pose: int, config: FieldConfig, rng: np.random.Generator):
        self.store = store
        self.n_pose = n_pose
        self.config = config
        self.encoding = FrequencyEncoding(3, config.sdf_octaves)
        self.feature_dim = config.feature_dim
        dims = [self.encoding.output_dim + n_pose] + [config.sdf_hidden] * config.sdf_layers + [1 + config.feature_dim]
        self.net = MLP(store, "shape", dims, rng, config.softplus_beta)

    def _inputs(self, x_c: Tensor, pose) -> Tensor:
        m = x_c.shape[0]
        if self.n_pose == 0:
            return self.encoding(x_c)
        pose = as_tensor(pose)
        if pose.ndim == 1:
            pose = broadcast_to(reshape(pose, (1, self.n_pose)), (m, self.n_pose))
        return concat([self.encoding(x_c), pose], axis=-1)

    def eval_sdf(self, x_c, pose) -> Tuple[Tensor, Tensor]:
        x_c = as_tensor(x_c)
        out = self.net(self._inputs(x_c, pose))
        return getitem(out, (slice(None), 0)), getitem(out, (slice(None), slice(1, None)))

    def eval_sdf_with_gradient(self, x_c, pose) -> Tuple[Tensor, Tensor, Tensor]:
        """(sdf, z, d sdf / d x_c), all differentiable."""
        x_c = as_tensor(x_c)
        out, grad_in = self.net.forward_with_input_grad(self._inputs(x_c, pose), 0)
        enc_dim = self.encoding.output_dim
        grad_enc = getitem(grad_in, (slice(None), slice(0, enc_dim)))
        grad_x = self.encoding.input_gradient(x_c, grad_enc)
        return getitem(out, (slice(None), 0)), getitem(out, (slice(None), slice(1, None))), grad_x

    def sdf_numpy(self, points: np.ndarray, pose: Optional[np.ndarray] = None, chunk: int = 65536) -> np.ndarray:
        pose = np.zeros(self.n_pose) if pose is None else np.asarray(pose)
        values = []
        with no_grad():
            for start in range(0, len(points), chunk):
                sdf, _ = self.eval_sdf(points[start:start + chunk], pose)
                values.append(np.asarray(sdf.data, dtype=np.float64))
        return np.concatenate(values) if values else np.zeros(0)

    def geometric_init(self, radius: float, rng: np.random.Generator, fit_steps: Optional[int] = None) -> None:
        """
        Initialize the network to approximate ||x|| - radius.

        Last layer mean sqrt(pi)/sqrt(width) with bias -radius; the first layer
        sees only the raw xyz columns. A short Adam fit then tightens the
        approximation over the canonical box.
        """
        if radius <= 0:
            raise ValueError("geometric init radius must be positive")
        net = self.net
        dims = net.dims
        for i in range(net.n_layers):
            d_in, d_out = dims[i], dims[i + 1]
            if i == net.n_layers - 1:
                w = rng.normal(np.sqrt(np.pi) / np.sqrt(d_in), 1e-4, size=(d_in, d_out))
                b = np.full(d_out, -radius)
            elif i == 0:
                w = np.zeros((d_in, d_out))
                w[:3] = rng.normal(0.0, np.sqrt(2.0) / np.sqrt(d_out), size=(3, d_out))
                b = np.zeros(d_out)
            else:
                w = rng.normal(0.0, np.sqrt(2.0) / np.sqrt(d_out), size=(d_in, d_out))
                b = np.zeros(d_out)
            net.weights[i].data = w.astype(net.weights[i].data.dtype)
            net.biases[i].data = b.astype(net.biases[i].data.dtype)
        steps = self.config.geometric_init_fit_steps if fit_steps is None else fit_steps
        if steps > 0:
            self._fit_sphere(radius, steps, rng)

    def _fit_sphere(self, radius: float, steps: int, rng: np.random.Generator) -> None:
        # local import: optimize depends on this module
        from optimize.adam import Adam

        names = [name for name in self.store.names() if name.startswith("shape.")]
        optimizer = Adam(self.store, lr=self.config.geometric_init_fit_lr, names=names)
        pose = np.zeros(self.n_pose)
        count = self.config.geometric_init_fit_points
        loss_value = float("nan")
        for _ in range(steps):
            points = rng.uniform(-1.0, 1.0, size=(count, 3))
            target = np.linalg.norm(points, axis=1) - radius
            sdf, _ = self.eval_sdf(points, pose)
            residual = sdf - target
            loss = mean(residual * residual)
            self.store.zero_grad()
            backward(loss, self.store)
            optimizer.step()
            loss_value = loss.item()
        logger.info(f"[FIELDS] Sphere fit: {steps} steps, final mse {loss_value:.2e}")


class HumanTextureField:
    """Canonical texture network: x_c + n_d + theta + z -> rgb in (0, 1)."""

    def __init__(self, store: ParamStore, n_pose: int, config: FieldConfig, rng: np.random.Generator):
        self.n_pose = n_pose
        self.feature_dim = config.feature_dim
        dims = [3 + 3 + n_pose + config.feature_dim] + [config.texture_hidden] * config.texture_layers + [3]
        self.net = MLP(store, "texture", dims, rng, config.softplus_beta)

    def eval_texture(self, x_c, normals, pose, features) -> Tensor:
        x_c = as_tensor(x_c)
        m = x_c.shape[0]
        parts = [x_c, as_tensor(normals)]
        if self.n_pose:
            pose = as_tensor(pose)
            if pose.ndim == 1:
                pose = broadcast_to(reshape(pose, (1, self.n_pose)), (m, self.n_pose))
            parts.append(pose)
        if self.feature_dim:
            parts.append(as_tensor(features))
        return sigmoid(self.net(concat(parts, axis=-1)))


class BackgroundField:
    """Outer-volume network: enc(x'_b) + enc(v) + latent t_i -> (sigma >= 0, rgb)."""

    def __init__(self, store: ParamStore, n_frames: int, config: FieldConfig, rng: np.random.Generator):
        self.n_frames = n_frames
        self.point_encoding = FrequencyEncoding(4, config.background_octaves)
        self.view_encoding = FrequencyEncoding(3, config.view_octaves)
        self.latent_dim = config.latent_dim
        self.latents = store.add("background.latents", np.zeros((n_frames, config.latent_dim)))
        dims = ([self.point_encoding.output_dim + self.view_encoding.output_dim + config.latent_dim]
                + [config.background_hidden] * config.background_layers + [4])
        # the background is smooth; plain softplus keeps it that way
        self.net = MLP(store, "background.net", dims, rng, softplus_beta=1.0)

    def latent_codes(self, frame_index: Union[int, np.ndarray, None], count: int) -> Tensor:
        if frame_index is None:
            mean_latent = reshape(self.latents.mean(axis=0), (1, self.latent_dim))
            return broadcast_to(mean_latent, (count, self.latent_dim))
        indices = np.broadcast_to(np.asarray(frame_index, dtype=np.int64), (count,))
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_frames):
            bad = indices[(indices < 0) | (indices >= self.n_frames)][0]
            raise UnknownFrameError(f"no background latent for frame {int(bad)} ({self.n_frames} trained)")
        return getitem(self.latents, np.array(indices))

    def eval_background(self, quadruples, directions, frame_index: Union[int, np.ndarray, None]) -> Tuple[Tensor, Tensor]:
        quadruples = as_tensor(quadruples)
        m = quadruples.shape[0]
        inputs = concat([
            self.point_encoding(quadruples),
            self.view_encoding(as_tensor(directions)),
            self.latent_codes(frame_index, m),
        ], axis=-1)
        out = self.net(inputs)
        density = softplus(getitem(out, (slice(None), 0)), 1.0)
        rgb = sigmoid(getitem(out, (slice(None), slice(1, 4))))
        return density, rgb


@dataclass
class SceneFields:
    """Every learnable field of a scene, sharing one ParamStore."""

    store: ParamStore
    shape: HumanShapeField
    texture: HumanTextureField
    background: BackgroundField
    density: DensityParams
    config: FieldConfig

    @classmethod
    def build(cls, config: FieldConfig, n_frames: int, n_pose: int, store: Optional[ParamStore] = None,
              geometric_init: bool = True) -> "SceneFields":
        store = store if store is not None else ParamStore()
        rng = np.random.default_rng(config.seed)
        shape = HumanShapeField(store, n_pose, config, rng)
        texture = HumanTextureField(store, n_pose, config, rng)
        background = BackgroundField(store, n_frames, config, rng)
        density = DensityParams(store, config.alpha_init, config.beta_init)
        if geometric_init:
            shape.geometric_init(config.init_radius, rng)
        logger.info(f"[FIELDS] Built scene fields: {len(store)} tensors, {store.num_values()} values")
        return cls(store=store, shape=shape, texture=texture, background=background, density=density, config=config)
