import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from autodiff import ParamStore, as_tensor, finite_difference_check, tsum
from body import (
    CapsuleBone,
    DegenerateTransformError,
    InverseWarp,
    PoseDimensionError,
    PoseParams,
    RigidTransform,
    Skeleton,
    ZeroGradientError,
    bone_transforms,
    bone_transforms_numpy,
    deformed_normal,
    forward_lbs,
    idw_weights,
    inverse_lbs,
    inverse_lbs_numpy,
    is_rigid,
    rodrigues,
    skinning_weights,
)


def rotation_z(degrees: float) -> np.ndarray:
    out = np.eye(4)
    out[:3, :3] = Rotation.from_euler("z", degrees, degrees=True).as_matrix()
    return out


def translation(offset) -> np.ndarray:
    out = np.eye(4)
    out[:3, 3] = offset
    return out


def two_point_skeleton() -> Skeleton:
    return Skeleton(
        names=["a", "b"], parents=[-1, 0], joints=np.zeros((2, 3)),
        proxy_points=np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), proxy_weights=np.eye(2),
        capsule_tips=np.ones((2, 3)), radii=np.array([0.1, 0.1]), k_nearest=2,
    )


def chain_skeleton() -> Skeleton:
    bones = [
        CapsuleBone(name="root", parent=-1, joint=(0.0, 0.0, 0.0), tip=(0.0, 1.0, 0.0), radius=0.1),
        CapsuleBone(name="child", parent=0, joint=(0.0, 1.0, 0.0), tip=(1.0, 1.0, 0.0), radius=0.1),
    ]
    return Skeleton.from_capsules(bones, points_per_bone=50)


def test_proxy_weights_are_convex(tiny_skeleton):
    weights = tiny_skeleton.proxy_weights
    assert np.all(weights >= 0)
    np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-9)


def test_zero_pose_gives_identity_transforms(tiny_skeleton):
    transforms = bone_transforms(tiny_skeleton, np.zeros(tiny_skeleton.pose_dim)).data
    np.testing.assert_allclose(transforms, np.broadcast_to(np.eye(4), transforms.shape), atol=1e-12)


def test_root_translation_shifts_every_bone(tiny_skeleton):
    pose = PoseParams(rotations=np.zeros((tiny_skeleton.n_bones, 3)), translation=np.array([1.0, 0.0, 0.0]))
    for matrix in bone_transforms(tiny_skeleton, pose).data:
        np.testing.assert_allclose(matrix, translation([1.0, 0.0, 0.0]), atol=1e-12)


def test_child_rotation_about_its_joint():
    skeleton = chain_skeleton()
    pose = np.zeros(skeleton.pose_dim)
    pose[3:6] = [0.0, 0.0, np.pi / 2]
    child = bone_transforms(skeleton, pose).data[1]
    expected = translation([0.0, 1.0, 0.0]) @ rotation_z(90.0) @ translation([0.0, -1.0, 0.0])
    np.testing.assert_allclose(child, expected, atol=1e-12)
    np.testing.assert_allclose(RigidTransform(child).apply(np.array([[1.0, 1.0, 0.0]])), [[0.0, 2.0, 0.0]], atol=1e-12)


def test_transforms_are_rigid_and_match_numpy_path(tiny_skeleton, rng):
    for _ in range(20):
        pose = rng.normal(scale=0.6, size=tiny_skeleton.pose_dim)
        recorded = bone_transforms(tiny_skeleton, pose).data
        constant = bone_transforms_numpy(tiny_skeleton, pose)
        np.testing.assert_allclose(recorded, constant, atol=1e-10)
        assert is_rigid(recorded, tol=1e-8)
        np.testing.assert_allclose(recorded[:, 3], np.broadcast_to([0.0, 0.0, 0.0, 1.0], (tiny_skeleton.n_bones, 4)))


def test_rodrigues_is_smooth_at_zero():
    store = ParamStore()
    store.add("w", np.array([[1e-7, -2e-7, 3e-8], [0.4, -0.2, 0.9]]))
    target = np.random.default_rng(3).normal(size=(2, 3, 3))
    report = finite_difference_check(lambda: tsum(rodrigues(store["w"]) * target), store, step=1e-6)
    assert report.passed
    np.testing.assert_allclose(rodrigues(np.zeros((1, 3))).data[0], np.eye(3), atol=1e-15)


def test_pose_gradient_matches_finite_differences(tiny_skeleton, rng):
    store = ParamStore()
    store.add("pose", rng.normal(scale=0.4, size=tiny_skeleton.pose_dim))
    target = rng.normal(size=(tiny_skeleton.n_bones, 4, 4))
    report = finite_difference_check(lambda: tsum(bone_transforms(tiny_skeleton, store["pose"]) * target), store)
    assert report.passed


def test_wrong_pose_length_is_rejected(tiny_skeleton):
    with pytest.raises(PoseDimensionError):
        bone_transforms(tiny_skeleton, np.zeros(tiny_skeleton.pose_dim - 1))
    with pytest.raises(PoseDimensionError):
        PoseParams.from_vector(np.zeros(4), tiny_skeleton.n_bones)


def test_pose_params_vector_layout():
    pose = PoseParams(rotations=np.arange(6.0).reshape(2, 3), translation=np.array([7.0, 8.0, 9.0]))
    np.testing.assert_array_equal(pose.vector, np.arange(10.0))
    back = PoseParams.from_vector(pose.vector, 2)
    np.testing.assert_array_equal(back.rotations, pose.rotations)


def test_weights_at_a_proxy_point_are_copied(tiny_skeleton):
    idx = 17
    weights = skinning_weights(tiny_skeleton, tiny_skeleton.proxy_points[idx:idx + 1])
    np.testing.assert_allclose(weights[0], tiny_skeleton.proxy_weights[idx], atol=1e-12)


def test_equidistant_point_blends_evenly():
    weights = skinning_weights(two_point_skeleton(), np.zeros((1, 3)))
    np.testing.assert_allclose(weights[0], [0.5, 0.5], atol=1e-12)


def test_weights_match_brute_force_neighbours(tiny_skeleton, rng):
    points = rng.uniform(-0.8, 0.8, size=(50, 3))
    weights = skinning_weights(tiny_skeleton, points)
    proxies, proxy_weights = tiny_skeleton.proxy_points, tiny_skeleton.proxy_weights
    for point, row in zip(points, weights):
        distances = np.linalg.norm(proxies - point, axis=1)
        nearest = np.argsort(distances)[:4]
        inverse = 1.0 / np.maximum(distances[nearest], 1e-6)
        expected = inverse @ proxy_weights[nearest] / inverse.sum()
        np.testing.assert_allclose(row, expected, atol=1e-12)
    np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-9)


def test_deformed_space_weights_need_transforms(tiny_skeleton):
    with pytest.raises(ValueError):
        skinning_weights(tiny_skeleton, np.zeros((1, 3)), "deformed")
    with pytest.raises(ValueError):
        skinning_weights(tiny_skeleton, np.zeros((1, 3)), "screen")


def test_idw_on_empty_query(tiny_skeleton):
    out = idw_weights(tiny_skeleton.canonical_tree, tiny_skeleton.proxy_weights, np.zeros((0, 3)), 4)
    assert out.shape == (0, tiny_skeleton.n_bones)


def test_forward_lbs_cases():
    x = np.array([[1.0, 0.0, 0.0]])
    identity = as_tensor(np.stack([np.eye(4), np.eye(4)]))
    np.testing.assert_allclose(forward_lbs(x, np.array([[1.0, 0.0]]), identity).data, x)

    rotated = as_tensor(np.stack([rotation_z(90.0), np.eye(4)]))
    np.testing.assert_allclose(forward_lbs(x, np.array([[1.0, 0.0]]), rotated).data, [[0.0, 1.0, 0.0]], atol=1e-12)

    shifted = as_tensor(np.stack([translation([1.0, 0.0, 0.0]), translation([0.0, 1.0, 0.0])]))
    np.testing.assert_allclose(forward_lbs(x, np.array([[0.5, 0.5]]), shifted).data, x + [0.5, 0.5, 0.0], atol=1e-12)


def test_inverse_lbs_of_rigid_bone_round_trips(rng):
    x = rng.normal(size=(10, 3))
    weights = np.tile([1.0, 0.0], (10, 1))
    matrix = translation([0.3, -0.2, 0.5]) @ rotation_z(37.0)
    transforms = as_tensor(np.stack([matrix, np.eye(4)]))
    posed = forward_lbs(x, weights, transforms)
    warp = inverse_lbs(posed, two_point_skeleton(), transforms, weights=weights)
    np.testing.assert_allclose(warp.canonical.data, x, atol=1e-12)

    identity = as_tensor(np.stack([np.eye(4), np.eye(4)]))
    np.testing.assert_allclose(inverse_lbs(x, two_point_skeleton(), identity, weights=weights).canonical.data, x)


def test_round_trip_on_proxy_surface(tiny_skeleton, rng):
    pose = rng.normal(scale=0.3, size=tiny_skeleton.pose_dim)
    transforms = bone_transforms(tiny_skeleton, pose)
    canonical = tiny_skeleton.proxy_points
    posed = forward_lbs(canonical, tiny_skeleton.proxy_weights, transforms)
    warp = inverse_lbs(posed, tiny_skeleton, transforms)
    assert np.max(np.linalg.norm(warp.canonical.data - canonical, axis=1)) <= 1e-3


def test_singular_blend_carries_its_determinant():
    transforms = as_tensor(np.stack([rotation_z(90.0), rotation_z(-90.0)]))
    with pytest.raises(DegenerateTransformError) as info:
        inverse_lbs(np.zeros((1, 3)), two_point_skeleton(), transforms, weights=np.array([[0.5, 0.5]]))
    assert abs(info.value.determinant) < 1e-10


def test_deformed_normal_cases():
    identity = as_tensor(np.eye(4)[None])
    gradient = as_tensor(np.array([[0.0, 2.0, 0.0]]))
    raw, unit = deformed_normal(identity, gradient)
    np.testing.assert_allclose(raw.data, gradient.data)
    np.testing.assert_allclose(unit.data, [[0.0, 1.0, 0.0]])

    transforms = as_tensor(np.stack([rotation_z(90.0), np.eye(4)]))
    warp = inverse_lbs(np.array([[0.0, 1.0, 0.0]]), two_point_skeleton(), transforms, weights=np.array([[1.0, 0.0]]))
    assert isinstance(warp, InverseWarp)
    _, unit = deformed_normal(warp, np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(unit.data, [[0.0, 1.0, 0.0]], atol=1e-12)

    with pytest.raises(ZeroGradientError):
        deformed_normal(identity, np.zeros((1, 3)))


def test_deformed_gradient_matches_finite_differences(tiny_skeleton, rng):
    center, radius, step = np.array([0.1, 0.2, -0.1]), 0.4, 1e-6

    def canonical_sdf(points):
        return np.linalg.norm(points - center, axis=1) - radius

    for _ in range(100):
        pose = rng.normal(scale=0.4, size=tiny_skeleton.pose_dim)
        transforms = bone_transforms_numpy(tiny_skeleton, pose)
        x_d = rng.uniform(-0.6, 0.6, size=(1, 3))
        weights = skinning_weights(tiny_skeleton, x_d, "deformed", transforms)
        warp = inverse_lbs(x_d, tiny_skeleton, as_tensor(transforms), weights=weights)
        x_c = warp.canonical.data
        raw, _ = deformed_normal(warp, (x_c - center) / np.linalg.norm(x_c - center, axis=1, keepdims=True))

        numeric = np.zeros(3)
        for k in range(3):
            offset = np.zeros(3)
            offset[k] = step
            plus, _ = inverse_lbs_numpy(x_d + offset, tiny_skeleton, transforms, weights)
            minus, _ = inverse_lbs_numpy(x_d - offset, tiny_skeleton, transforms, weights)
            numeric[k] = (canonical_sdf(plus)[0] - canonical_sdf(minus)[0]) / (2.0 * step)
        error = np.linalg.norm(raw.data[0] - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert error <= 1e-4


def test_rigid_transform_inverse(rng):
    matrix = np.eye(4)
    matrix[:3, :3] = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
    matrix[:3, 3] = rng.normal(size=3)
    transform = RigidTransform(matrix)
    np.testing.assert_allclose(transform.compose(transform.inverse()).matrix, np.eye(4), atol=1e-12)


def random_rigid(rng) -> np.ndarray:
    out = np.eye(4)
    out[:3, :3] = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
    out[:3, 3] = rng.normal(size=3)
    return out


def test_skinning_weights_are_convex_on_random_queries(tiny_skeleton, rng):
    points = rng.uniform(-1.0, 1.0, size=(1000, 3))
    transforms = bone_transforms_numpy(tiny_skeleton, rng.normal(scale=0.4, size=tiny_skeleton.pose_dim))
    for weights in (skinning_weights(tiny_skeleton, points),
                    skinning_weights(tiny_skeleton, points, "deformed", transforms)):
        assert weights.shape == (1000, tiny_skeleton.n_bones)
        assert np.all(weights >= 0.0)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)


def test_global_rigid_motion_commutes_with_skinning(tiny_skeleton, rng):
    for _ in range(100):
        transforms = bone_transforms_numpy(tiny_skeleton, rng.normal(scale=0.4, size=tiny_skeleton.pose_dim))
        g = random_rigid(rng)
        moved = np.einsum("ij,bjk->bik", g, transforms)
        x_c = rng.uniform(-0.8, 0.8, size=(5, 3))
        weights = skinning_weights(tiny_skeleton, x_c)

        x_d = forward_lbs(x_c, weights, as_tensor(transforms)).data
        expected = x_d @ g[:3, :3].T + g[:3, 3]
        np.testing.assert_allclose(forward_lbs(x_c, weights, as_tensor(moved)).data, expected, atol=1e-12)

        # posed proxy points move rigidly too, so deformed-space weights are unchanged
        np.testing.assert_allclose(skinning_weights(tiny_skeleton, expected, "deformed", moved),
                                   skinning_weights(tiny_skeleton, x_d, "deformed", transforms), atol=1e-9)
        back = inverse_lbs(expected, tiny_skeleton, as_tensor(moved), weights=weights).canonical.data
        np.testing.assert_allclose(back, inverse_lbs(x_d, tiny_skeleton, as_tensor(transforms),
                                                      weights=weights).canonical.data, atol=1e-9)
