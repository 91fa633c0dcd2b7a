"""
Shared fixtures - 64-bit precision and tiny scenes, fields and training states
"""

import numpy as np
import pytest

from autodiff import set_finite_checks, set_precision
from body import default_skeleton
from fields import FieldConfig, SceneFields
from optimize import TrainConfig, build_state
from render import SamplingConfig
from synthetic import SyntheticSceneSpec, generate_dataset


@pytest.fixture(autouse=True)
def float64():
    """Every test starts (and ends) at 64-bit precision with finite checks on."""
    set_precision("float64")
    set_finite_checks(True)
    yield
    set_precision("float64")
    set_finite_checks(True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_skeleton():
    return default_skeleton(points_per_bone=60, k_nearest=4, seed=0)


def tiny_field_config(**overrides) -> FieldConfig:
    values = dict(
        sdf_hidden=16, sdf_layers=2, feature_dim=4, sdf_octaves=2,
        texture_hidden=16, texture_layers=2,
        background_hidden=16, background_layers=2, background_octaves=2, view_octaves=1,
        latent_dim=2, geometric_init_fit_steps=30, geometric_init_fit_points=256,
    )
    values.update(overrides)
    return FieldConfig(**values)


def tiny_sampling(**overrides) -> SamplingConfig:
    values = dict(n_uniform=8, n_importance=8, n_outer=8, chunk_rays=256)
    values.update(overrides)
    return SamplingConfig(**values)


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(steps=4, rays_per_frame=8, frames_per_batch=2, eikonal_points=8,
                  skinning_points_per_bone=40, checkpoint_every=0, log_every=1)
    values.update(overrides)
    return TrainConfig(**values)


def tiny_scene(**overrides) -> SyntheticSceneSpec:
    values = dict(n_frames=4, width=24, height=24, holdout_views=1, min_human_fraction=0.01, seed=0)
    values.update(overrides)
    return SyntheticSceneSpec(**values)


@pytest.fixture
def tiny_fields(tiny_skeleton):
    return SceneFields.build(tiny_field_config(), n_frames=3, n_pose=tiny_skeleton.pose_dim)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(tiny_scene())


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory, tiny_dataset):
    directory = tmp_path_factory.mktemp("dataset")
    tiny_dataset.save(str(directory))
    return str(directory)


@pytest.fixture
def tiny_state(tiny_dataset):
    return build_state(tiny_dataset, tiny_train_config(), tiny_field_config(), tiny_sampling())
