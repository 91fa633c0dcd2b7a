import numpy as np
import pytest

from autodiff import ParamStore, finite_difference_check, mean, tsum
from conftest import tiny_field_config
from fields import (
    MLP,
    BackgroundField,
    DensityParams,
    FieldConfig,
    FrequencyEncoding,
    HumanShapeField,
    HumanTextureField,
    InnerVolumeError,
    SceneFields,
    UnknownFrameError,
    invert_sphere,
    laplace_density,
    sdf_to_density,
)


def test_invert_sphere_direct_formula():
    np.testing.assert_allclose(invert_sphere(np.array([[2.0, 0.0, 0.0]])), [[1.0, 0.0, 0.0, 0.5]])


def test_invert_sphere_on_boundary(rng):
    x = rng.normal(size=(10, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    out = invert_sphere(x)
    np.testing.assert_allclose(out[:, :3], x, atol=1e-12)
    np.testing.assert_allclose(out[:, 3], 1.0, atol=1e-12)


def test_inverse_radius_decreases_to_zero():
    direction = np.array([0.6, 0.0, 0.8])
    fourth = invert_sphere(np.outer([1.0, 2.0, 10.0, 1e3, 1e6], direction))[:, 3]
    assert np.all(np.diff(fourth) < 0)
    assert fourth[-1] < 1e-5


def test_invert_sphere_preserves_direction(rng):
    origin = np.array([0.1, -0.2, 0.05])
    x = origin + rng.normal(size=(100, 3)) * 5.0
    x = x[np.linalg.norm(x - origin, axis=1) >= 1.0]
    out = invert_sphere(x, origin)
    r = np.linalg.norm(x - origin, axis=1, keepdims=True)
    np.testing.assert_allclose(out[:, :3], (x - origin) / r, atol=1e-12)


def test_inner_point_is_rejected():
    with pytest.raises(InnerVolumeError):
        invert_sphere(np.array([[0.5, 0.0, 0.0]]))


@pytest.mark.parametrize("sdf, fraction", [
    (0.0, 0.5),
    (-0.05 * np.log(2.0), 0.75),
    (0.05 * np.log(2.0), 0.25),
    (50.0, 0.0),
    (-50.0, 1.0),
])
def test_density_cases(sdf, fraction):
    alpha, beta = 50.0, 0.05
    assert sdf_to_density(np.array([sdf]), alpha, beta).data[0] == pytest.approx(fraction * alpha, abs=1e-9)
    assert laplace_density(np.array([sdf]), alpha, beta)[0] == pytest.approx(fraction * alpha, abs=1e-9)


def test_density_is_monotone_in_sdf(rng):
    for alpha, beta in rng.uniform([1.0, 0.01], [100.0, 0.5], size=(100, 2)):
        sdf = np.sort(rng.normal(scale=3.0 * beta, size=64))
        sigma = sdf_to_density(sdf, alpha, beta).data
        assert np.all(np.diff(sigma) <= 0.0)
        assert np.all((sigma > 0.0) & (sigma < alpha))
        unsaturated = np.abs(sdf) < 10.0 * beta
        assert np.all(np.diff(sigma[unsaturated]) < 0.0)


def test_density_is_continuous_at_the_surface():
    alpha, beta = 50.0, 0.05
    left, right = sdf_to_density(np.array([-1e-9, 1e-9]), alpha, beta).data
    assert left == pytest.approx(alpha / 2, abs=1e-6)
    assert right == pytest.approx(alpha / 2, abs=1e-6)
    assert left >= right


def test_density_parameters_stay_positive():
    store = ParamStore()
    density = DensityParams(store, alpha=50.0, beta=0.05)
    store["density.log_beta"].data = np.array(-40.0)
    assert density.alpha > 0 and density.beta > 0
    with pytest.raises(ValueError):
        DensityParams(ParamStore(), alpha=0.0)


def test_density_gradient_in_alpha_and_beta(rng):
    store = ParamStore()
    density = DensityParams(store)
    sdf = rng.normal(scale=0.1, size=32)
    report = finite_difference_check(lambda: tsum(density(sdf)), store)
    assert report.passed


def test_encoding_layout_and_derivative(rng):
    encoding = FrequencyEncoding(3, 4)
    x = rng.uniform(-1, 1, size=(5, 3))
    features = encoding(x).data
    assert features.shape == (5, 27)
    np.testing.assert_allclose(features[:, :3], x)
    np.testing.assert_allclose(features[:, 3:6], np.sin(np.pi * x))

    weights = rng.normal(size=(5, 27))
    analytic = encoding.input_gradient(x, weights).data
    step = 1e-6
    for k in range(3):
        offset = np.zeros(3)
        offset[k] = step
        numeric = ((encoding(x + offset).data - encoding(x - offset).data) * weights).sum(axis=1) / (2 * step)
        np.testing.assert_allclose(analytic[:, k], numeric, rtol=1e-5, atol=1e-7)


def test_mlp_input_gradient_is_differentiable(rng):
    store = ParamStore()
    net = MLP(store, "net", [4, 8, 8, 2], rng, softplus_beta=10.0)
    h = rng.normal(size=(6, 4))
    _, grad = net.forward_with_input_grad(h, 0)
    step = 1e-6
    for k in range(4):
        offset = np.zeros(4)
        offset[k] = step
        numeric = (net(h + offset).data[:, 0] - net(h - offset).data[:, 0]) / (2 * step)
        np.testing.assert_allclose(grad.data[:, k], numeric, rtol=1e-5, atol=1e-8)

    report = finite_difference_check(lambda: mean(net.forward_with_input_grad(h, 0)[1] ** 2.0), store,
                                     max_entries_per_param=6)
    assert report.passed


def test_shape_gradient_matches_finite_differences(tiny_fields, rng):
    shape = tiny_fields.shape
    pose = rng.normal(scale=0.2, size=shape.n_pose)
    x = rng.uniform(-0.8, 0.8, size=(20, 3))
    sdf, features, gradient = shape.eval_sdf_with_gradient(x, pose)
    assert sdf.shape == (20,) and features.shape == (20, 4)
    step = 1e-6
    for k in range(3):
        offset = np.zeros(3)
        offset[k] = step
        numeric = (shape.sdf_numpy(x + offset, pose) - shape.sdf_numpy(x - offset, pose)) / (2 * step)
        np.testing.assert_allclose(gradient.data[:, k], numeric, rtol=1e-4, atol=1e-6)


def test_eikonal_of_shape_gradient_differentiates(tiny_fields, rng):
    shape = tiny_fields.shape
    pose = np.zeros(shape.n_pose)
    x = rng.uniform(-0.8, 0.8, size=(8, 3))

    def residual():
        _, _, gradient = shape.eval_sdf_with_gradient(x, pose)
        length = tsum(gradient * gradient, axis=-1) ** 0.5
        return mean((length - 1.0) ** 2.0)

    report = finite_difference_check(residual, tiny_fields.store, names=["shape.w0", "shape.w1", "shape.b0"],
                                     max_entries_per_param=6, step=1e-6)
    assert report.passed


def test_geometric_init_approximates_sphere():
    config = FieldConfig(seed=0)
    store = ParamStore()
    rng = np.random.default_rng(config.seed)
    shape = HumanShapeField(store, 18, config, rng)
    shape.geometric_init(0.5, rng)

    assert abs(shape.sdf_numpy(np.zeros((1, 3)))[0] + 0.5) <= 0.1
    axis = np.linspace(-1.0, 1.0, 16)
    grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    deviation = np.abs(shape.sdf_numpy(grid) - (np.linalg.norm(grid, axis=1) - 0.5))
    assert deviation.max() <= 0.15

    probes = np.random.default_rng(7).uniform(-1.0, 1.0, size=(256, 3))
    _, _, gradient = shape.eval_sdf_with_gradient(probes, np.zeros(18))
    residual = np.mean((np.linalg.norm(gradient.data, axis=1) - 1.0) ** 2)
    assert residual <= 0.2


def test_geometric_init_needs_positive_radius(tiny_fields, rng):
    with pytest.raises(ValueError):
        tiny_fields.shape.geometric_init(0.0, rng)


def test_texture_stays_inside_unit_interval(rng):
    config = tiny_field_config()
    store = ParamStore()
    texture = HumanTextureField(store, 6, config, rng)
    x = rng.normal(size=(64, 3)) * 3.0
    normals = rng.normal(size=(64, 3))
    features = rng.normal(size=(64, config.feature_dim))
    rgb = texture.eval_texture(x, normals, np.zeros(6), features).data
    assert rgb.shape == (64, 3)
    assert np.all(rgb > 0.0) and np.all(rgb < 1.0)
    np.testing.assert_array_equal(rgb, texture.eval_texture(x, normals, np.zeros(6), features).data)


def test_background_latents_and_mean_mode(rng):
    config = tiny_field_config()
    store = ParamStore()
    background = BackgroundField(store, 3, config, rng)
    store["background.latents"].data = rng.normal(size=(3, config.latent_dim))
    points = rng.normal(size=(10, 3))
    points *= rng.uniform(1.5, 4.0, size=(10, 1)) / np.linalg.norm(points, axis=1, keepdims=True)
    quads = invert_sphere(points)
    dirs = rng.normal(size=(10, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    sigma, rgb = background.eval_background(quads, dirs, 1)
    assert np.all(sigma.data >= 0)
    assert np.all((rgb.data > 0) & (rgb.data < 1))
    again, _ = background.eval_background(quads, dirs, 1)
    np.testing.assert_array_equal(sigma.data, again.data)

    mean_latent = background.latent_codes(None, 2).data
    np.testing.assert_allclose(mean_latent[0], store["background.latents"].data.mean(axis=0))
    background.eval_background(quads, dirs, None)

    with pytest.raises(UnknownFrameError):
        background.eval_background(quads, dirs, 3)
    with pytest.raises(UnknownFrameError):
        background.latent_codes(np.array([0, -1]), 2)


def test_scene_fields_share_one_store(tiny_skeleton):
    fields = SceneFields.build(tiny_field_config(), n_frames=2, n_pose=tiny_skeleton.pose_dim, geometric_init=False)
    names = fields.store.names()
    assert "density.log_alpha" in names and "background.latents" in names
    assert any(n.startswith("shape.") for n in names) and any(n.startswith("texture.") for n in names)
    assert fields.density.alpha == pytest.approx(50.0)
    assert fields.density.beta == pytest.approx(0.05)
