import numpy as np
import pytest
from scipy import stats

from autodiff import as_tensor
from conftest import tiny_sampling
from render import (
    FAR_INTERVAL,
    Camera,
    PixelOutOfBoundsError,
    QuadratureError,
    SceneRenderer,
    composite,
    integrate_background,
    integrate_human,
    intersect_unit_sphere,
    quadrature,
    render_mask,
    sample_inner,
    sample_outer,
    sample_pdf,
    uniform_depths,
)
from render.sampling import depth_deltas


@pytest.fixture
def camera():
    return Camera.look_at((0.0, 0.4, 2.6), (0.0, 0.0, 0.0), fov_deg=55.0, width=16, height=12)


@pytest.fixture
def renderer(tiny_fields, tiny_skeleton):
    return SceneRenderer(tiny_fields, tiny_skeleton, tiny_sampling())


def test_principal_point_ray_is_optical_axis(camera):
    _, direction = camera.rays_through(np.array([[camera.intrinsics[0, 2], camera.intrinsics[1, 2]]]))
    np.testing.assert_allclose(direction[0], camera.optical_axis, atol=1e-12)


def test_all_rays_have_unit_norm(camera):
    _, directions = camera.generate_rays(camera.all_pixels())
    assert len(directions) == 16 * 12
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0, atol=1e-9)


def test_corner_ray_reprojects_to_its_pixel(camera):
    for pixel in ([0, 0], [11, 15], [0, 15], [11, 0]):
        origins, directions = camera.generate_rays(np.array([pixel]))
        projected = camera.project(origins + 2.0 * directions)
        np.testing.assert_allclose(projected[0], [pixel[1] + 0.5, pixel[0] + 0.5], atol=1e-6)


def test_out_of_bounds_pixel(camera):
    with pytest.raises(PixelOutOfBoundsError):
        camera.generate_rays(np.array([[12, 0]]))
    with pytest.raises(PixelOutOfBoundsError):
        camera.generate_rays(np.array([[0, -1]]))


def test_camera_dict_round_trip(camera):
    again = Camera.from_dict(camera.to_dict())
    np.testing.assert_array_equal(again.extrinsics, camera.extrinsics)
    assert again.shape == (12, 16)


def test_ray_through_center():
    near, far, hit = intersect_unit_sphere(np.array([[0.0, 0.0, -3.0]]), np.array([[0.0, 0.0, 1.0]]))
    assert hit[0]
    assert far[0] - near[0] == pytest.approx(2.0)
    depths = uniform_depths(near, far, 4)
    np.testing.assert_allclose(depths[0], [2.25, 2.75, 3.25, 3.75])
    np.testing.assert_allclose(np.diff(depths[0]), 0.5)


def test_ray_missing_the_sphere(renderer):
    origins, directions = np.array([[0.0, 2.0, -3.0]]), np.array([[0.0, 0.0, 1.0]])
    assert not intersect_unit_sphere(origins, directions)[2][0]
    out = renderer.render_rays(origins, directions, np.zeros(renderer.skeleton.pose_dim), 0)
    assert out["opacity"][0] == 0.0
    np.testing.assert_array_equal(out["color"], out["color_background"])


def test_importance_draws_from_flat_density_are_uniform():
    edges = np.linspace(0.0, 1.0, 9)[None, :]
    samples = sample_pdf(edges, np.ones((1, 8)), 10000, np.random.default_rng(0))[0]
    assert stats.kstest(samples, "uniform").pvalue > 0.01


def test_importance_draws_follow_the_weights():
    edges = np.linspace(0.0, 1.0, 5)[None, :]
    samples = sample_pdf(edges, np.array([[0.0, 0.0, 1.0, 0.0]]), 200, padding=1e-9)[0]
    assert np.all((samples >= 0.5) & (samples <= 0.75))


def test_inner_samples_are_ordered(renderer, rng):
    origins = np.tile([0.0, 0.0, 3.0], (20, 1))
    targets = rng.uniform(-0.5, 0.5, size=(20, 3))
    directions = targets - origins
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    pose = np.zeros(renderer.skeleton.pose_dim)
    transforms = np.broadcast_to(np.eye(4), (renderer.skeleton.n_bones, 4, 4))
    inner = sample_inner(origins, directions, renderer._density_fn(pose, transforms), renderer.config, rng)
    assert inner.depths.shape == (20, renderer.config.n_inner)
    assert np.all(np.diff(inner.depths, axis=1) >= 0)
    assert np.all(inner.deltas >= 0)
    np.testing.assert_array_equal(inner.counts, np.full(20, renderer.config.n_inner))


def test_outer_samples_equispaced_in_inverse_radius():
    outer = sample_outer(np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]), 2)
    np.testing.assert_allclose(outer.radii[0], [1.0, 2.0])
    np.testing.assert_allclose(outer.quadruples[0, :, 3], [1.0, 0.5])
    assert outer.deltas[0, -1] == FAR_INTERVAL


def test_outer_samples_for_missing_ray_start_at_closest_approach():
    outer = sample_outer(np.array([[0.0, 2.0, -3.0]]), np.array([[0.0, 0.0, 1.0]]), 4)
    assert outer.radii[0, 0] == pytest.approx(2.0)
    assert np.all(np.diff(outer.depths[0]) > 0)


@pytest.mark.parametrize("optical, tau", [
    ([0.0, 0.0], [0.0, 0.0]),
    ([np.log(2.0), np.log(2.0)], [0.5, 0.25]),
    ([20.0], [1.0 - np.exp(-20.0)]),
])
def test_quadrature_cases(optical, tau):
    weights = quadrature(np.array([optical]), np.ones((1, len(optical)))).data[0]
    np.testing.assert_allclose(weights, tau, atol=1e-12)


def test_two_sample_opacity():
    colors = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    color, opacity, _ = integrate_human(np.ones((1, 2)), np.full((1, 2), np.log(2.0)), colors)
    assert opacity.data[0] == pytest.approx(0.75)
    np.testing.assert_allclose(color.data[0], [0.5, 0.25, 0.0])


def test_empty_space_is_transparent():
    color, opacity, tau = integrate_human(np.ones((1, 3)), np.zeros((1, 3)), np.ones((1, 3, 3)))
    assert opacity.data[0] == 0.0
    np.testing.assert_array_equal(color.data, np.zeros((1, 3)))
    np.testing.assert_array_equal(integrate_background(np.ones((1, 3)), np.zeros((1, 3)), np.ones((1, 3, 3))).data,
                                  np.zeros((1, 3)))


def test_opaque_first_sample_sets_background_color():
    colors = np.array([[[0.2, 0.4, 0.6], [1.0, 1.0, 1.0]]])
    out = integrate_background(np.array([[1.0, FAR_INTERVAL]]), np.array([[100.0, 1.0]]), colors)
    np.testing.assert_allclose(out.data[0], [0.2, 0.4, 0.6], atol=1e-12)


def test_quadrature_identity(rng):
    sigma = rng.uniform(0.0, 5.0, size=(100, 16))
    deltas = rng.uniform(0.0, 0.2, size=(100, 16))
    tau = quadrature(sigma, deltas).data
    assert np.all(tau >= 0)
    np.testing.assert_allclose(tau.sum(axis=1), 1.0 - np.exp(-(sigma * deltas).sum(axis=1)), atol=1e-9)


def test_negative_interval_is_rejected():
    with pytest.raises(QuadratureError):
        integrate_human(np.array([[0.1, -0.1]]), np.ones((1, 2)), np.ones((1, 2, 3)))
    with pytest.raises(QuadratureError):
        integrate_background(np.array([[-0.1, 0.1]]), np.ones((1, 2)), np.ones((1, 2, 3)))


@pytest.mark.parametrize("opacity, human, background, expected", [
    (0.0, (0.0, 0.0, 0.0), (0.4, 0.8, 0.0), (0.4, 0.8, 0.0)),
    (1.0, (0.3, 0.3, 0.3), (0.4, 0.8, 0.0), (0.3, 0.3, 0.3)),
    (0.75, (0.3, 0.3, 0.3), (0.4, 0.8, 0.0), (0.4, 0.5, 0.3)),
])
def test_composite_cases(opacity, human, background, expected):
    out = composite(np.array([human]), np.array([opacity]), np.array([background]))
    np.testing.assert_allclose(out.data[0], expected, atol=1e-12)


def test_composite_is_a_convex_blend_of_sample_colors(rng):
    for _ in range(100):
        n_inner, n_outer = rng.integers(1, 12, size=2)
        inner_deltas = rng.uniform(0.0, 0.3, size=(1, n_inner))
        outer_deltas = np.append(rng.uniform(0.0, 0.5, size=n_outer - 1), FAR_INTERVAL)[None]
        inner_sigma = rng.uniform(0.0, 50.0, size=(1, n_inner))
        outer_sigma = rng.uniform(0.1, 5.0, size=(1, n_outer))
        inner_colors = rng.random((1, n_inner, 3))
        outer_colors = rng.random((1, n_outer, 3))

        human, opacity, tau = integrate_human(inner_deltas, inner_sigma, inner_colors)
        background = integrate_background(outer_deltas, outer_sigma, outer_colors)
        color = composite(human, opacity, background).data[0]
        alpha = opacity.data[0]
        assert -1e-12 <= alpha <= 1.0 + 1e-12

        outer_tau = quadrature(outer_sigma, outer_deltas).data[0]
        weights = np.concatenate([tau.data[0], (1.0 - alpha) * outer_tau])
        assert np.all(weights >= 0.0)
        assert weights.sum() == pytest.approx(1.0, abs=1e-12)
        samples = np.concatenate([inner_colors[0], outer_colors[0]])
        np.testing.assert_allclose(color, weights @ samples, atol=1e-12)
        assert np.all(color >= samples.min(axis=0) - 1e-12)
        assert np.all(color <= samples.max(axis=0) + 1e-12)


def test_rays_without_inner_samples_show_the_background(renderer, rng):
    directions = rng.normal(size=(100, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    offsets = rng.normal(size=(100, 3))
    offsets -= np.sum(offsets * directions, axis=1, keepdims=True) * directions
    offsets *= rng.uniform(1.2, 2.0, size=(100, 1)) / np.linalg.norm(offsets, axis=1, keepdims=True)
    origins = offsets - 3.0 * directions
    assert not np.any(intersect_unit_sphere(origins, directions)[2])
    out = renderer.render_rays(origins, directions, np.zeros(renderer.skeleton.pose_dim), 0)
    np.testing.assert_array_equal(out["opacity"], 0.0)
    np.testing.assert_array_equal(out["color"], out["color_background"])


def test_smooth_profile_matches_dense_quadrature():
    origins, directions = np.array([[0.0, 0.0, -3.0]]), np.array([[0.0, 0.0, 1.0]])
    near, far, _ = intersect_unit_sphere(origins, directions)

    def integrate(count):
        depths = uniform_depths(near, far, count)
        sigma = 3.0 * np.exp(-((depths - 3.0) / 0.3) ** 2)
        colors = np.stack([0.5 + 0.4 * np.sin(depths), 0.5 + 0.4 * np.cos(depths), np.full_like(depths, 0.5)], -1)
        color, opacity, _ = integrate_human(depth_deltas(depths, far), sigma, colors)
        return color.data[0], opacity.data[0]

    coarse, dense = integrate(64), integrate(640)
    np.testing.assert_allclose(coarse[0], dense[0], atol=1e-2)
    assert coarse[1] == pytest.approx(dense[1], abs=1e-2)


def test_initialized_sphere_is_visible(renderer):
    pose = np.zeros(renderer.skeleton.pose_dim)
    out = renderer.render_rays(np.array([[0.0, 0.0, 2.6]]), np.array([[0.0, 0.0, -1.0]]), pose, 0)
    assert out["opacity"][0] > 0.5
    assert np.all((out["color"] >= 0) & (out["color"] <= 1))


def test_render_is_deterministic_across_tilings(tiny_fields, tiny_skeleton, camera):
    renderer = SceneRenderer(tiny_fields, tiny_skeleton, tiny_sampling(chunk_rays=50))
    pose = np.zeros(renderer.skeleton.pose_dim)
    first = renderer.render_image(camera, pose, latent_index=1, n_jobs=1)
    second = renderer.render_image(camera, pose, latent_index=1, n_jobs=2)
    np.testing.assert_array_equal(first.rgb, second.rgb)
    np.testing.assert_array_equal(first.opacity, second.opacity)
    assert first.rgb.shape == (12, 16, 3)
    assert np.all((first.rgb >= 0) & (first.rgb <= 1))


def test_prepared_batch_groups_by_pose(renderer, rng):
    n = renderer.skeleton.pose_dim
    origins = np.tile([0.0, 0.0, 2.6], (6, 1))
    directions = np.tile([0.0, 0.0, -1.0], (6, 1)) + rng.normal(scale=0.05, size=(6, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    poses = rng.normal(scale=0.1, size=(3, n))
    batch = renderer.prepare_rays(origins, directions, np.array([2, 0, 2, 1, 0, 2]), poses,
                                  targets=np.zeros((6, 3)), rng=rng)
    assert batch.frames == [0, 1, 2]
    np.testing.assert_array_equal(batch.pose_ids, [0, 0, 1, 2, 2, 2])
    np.testing.assert_allclose(batch.skin_weights.sum(axis=-1), 1.0, atol=1e-9)

    output = renderer.evaluate(batch, as_tensor(poses))
    tau = output.result.weights.data
    assert np.all(tau >= 0)
    assert np.all(tau.sum(axis=1) <= 1.0 + 1e-6)
    assert output.sdf.shape == (6, renderer.config.n_inner)


def test_mask_threshold():
    np.testing.assert_array_equal(render_mask(np.zeros((2, 2))), np.zeros((2, 2), dtype=bool))
    np.testing.assert_array_equal(render_mask(np.ones((2, 2))), np.ones((2, 2), dtype=bool))
    np.testing.assert_array_equal(render_mask(np.array([0.49, 0.5])), [False, True])
    with pytest.raises(ValueError):
        render_mask(np.zeros(2), threshold=1.0)


@pytest.mark.slow
def test_renderer_matches_dense_sampling_reference(tiny_fields, tiny_skeleton, rng):
    coarse = SceneRenderer(tiny_fields, tiny_skeleton, tiny_sampling(n_uniform=32, n_importance=32, n_outer=32))
    dense = SceneRenderer(tiny_fields, tiny_skeleton, tiny_sampling(n_uniform=640, n_importance=0, n_outer=320))
    eyes = rng.normal(size=(1000, 3))
    eyes *= 2.6 / np.linalg.norm(eyes, axis=1, keepdims=True)
    targets = rng.uniform(-0.7, 0.7, size=(1000, 3))
    directions = targets - eyes
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    pose = np.zeros(tiny_skeleton.pose_dim)
    a = coarse.render_rays(eyes, directions, pose, 0)
    b = dense.render_rays(eyes, directions, pose, 0)
    np.testing.assert_allclose(a["color_human"], b["color_human"], atol=1e-2)
    np.testing.assert_allclose(a["opacity"], b["opacity"], atol=1e-2)
