"""
Trainer - global optimization over every frame of the sequence.

Each step draws frames and pixels, fixes the ray samples, evaluates the full
objective with gradients for the field weights, the per-frame poses and the
background latents, and applies one Adam update.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.transform import Rotation
from tqdm import tqdm

from autodiff import GradCheckReport, ParamStore, ShapeError, backward, finite_difference_check, set_precision
from body import Skeleton
from fields import FieldConfig, SceneFields
from objectives import LossReport, LossWeights, eikonal_points, epsilon_schedule, total_loss
from render import SamplingConfig, SceneRenderer
from utils.checkpoint import Checkpoint, CheckpointError, checkpoint_name, save_checkpoint

from .adam import Adam
from .training_log import TrainingLog

logger = logging.getLogger(__name__)

POSES = "poses"
LATENTS = "background.latents"


class DatasetMismatchError(ValueError):
    """Training state and dataset disagree (frame count, pose size)."""


class MissingGroundTruthError(ValueError):
    """The dataset carries no ground-truth poses to compare against."""


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: int = Field(2000, ge=1)
    rays_per_frame: int = Field(256, ge=1)
    frames_per_batch: int = Field(2, ge=1)
    lr_fields: float = Field(5e-4, gt=0)
    lr_poses: float = Field(1e-4, gt=0)
    lr_latents: float = Field(5e-4, gt=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)
    lr_schedule: Literal["constant", "cosine"] = "constant"
    epsilon_start: float = Field(0.2, gt=0)
    epsilon_end: float = Field(0.05, gt=0)
    eikonal_points: int = Field(256, ge=0)
    initial_poses: Literal["true", "noisy"] = "true"
    optimize_poses: bool = True
    skinning_points_per_bone: int = Field(200, ge=1)
    skinning_neighbors: int = Field(4, ge=1)
    seed: int = 0
    precision: Literal["float32", "float64"] = "float64"
    checkpoint_every: int = Field(500, ge=0, description="0 keeps only the final checkpoint")
    log_every: int = Field(50, ge=1)


@dataclass
class TrainState:
    fields: SceneFields
    skeleton: Skeleton
    renderer: SceneRenderer
    optimizer: Adam
    config: TrainConfig
    initial_poses: np.ndarray
    rng: np.random.Generator
    step: int = 0
    surface_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    log: TrainingLog = field(default_factory=TrainingLog)

    @property
    def store(self) -> ParamStore:
        return self.fields.store

    @property
    def poses(self) -> np.ndarray:
        return np.asarray(self.store[POSES].data, dtype=np.float64)

    @property
    def n_frames(self) -> int:
        return int(self.store[POSES].shape[0])


def build_state(dataset, config: TrainConfig, model: Optional[FieldConfig] = None,
                sampling: Optional[SamplingConfig] = None, geometric_init: bool = True) -> TrainState:
    """Fresh fields, poses and optimizer for a dataset."""
    if dataset.n_frames < 1:
        raise DatasetMismatchError("dataset has no frames")
    set_precision(config.precision)
    model = model or FieldConfig()
    sampling = sampling or SamplingConfig()
    skeleton = dataset.spec.skeleton(points_per_bone=config.skinning_points_per_bone,
                                     k_nearest=config.skinning_neighbors)
    initial = dataset.initial_poses(config.initial_poses)
    if initial.shape[1] != skeleton.pose_dim:
        raise DatasetMismatchError(f"dataset poses have {initial.shape[1]} values, skeleton needs {skeleton.pose_dim}")

    fields = SceneFields.build(model, dataset.n_frames, skeleton.pose_dim, geometric_init=geometric_init)
    fields.store.add(POSES, initial)
    if not config.optimize_poses:
        fields.store.set_trainable(POSES, False)
    optimizer = Adam(
        fields.store,
        lr=config.lr_fields,
        betas=config.betas,
        eps=config.adam_eps,
        lr_groups={POSES: config.lr_poses, LATENTS: config.lr_latents},
        schedule=config.lr_schedule,
        total_steps=config.steps,
    )
    renderer = SceneRenderer(fields, skeleton, sampling)
    logger.info(f"[TRAIN] Built state: {dataset.n_frames} frames, {fields.store.num_values()} parameters, "
                f"poses {'optimized' if config.optimize_poses else 'frozen'} from '{config.initial_poses}'")
    return TrainState(fields=fields, skeleton=skeleton, renderer=renderer, optimizer=optimizer, config=config,
                      initial_poses=initial.copy(), rng=np.random.default_rng(config.seed))


def check_dataset(state: TrainState, dataset) -> None:
    if dataset.n_frames != state.n_frames:
        raise DatasetMismatchError(f"state holds {state.n_frames} frame poses, dataset has {dataset.n_frames} frames")
    if state.fields.background.n_frames != dataset.n_frames:
        raise DatasetMismatchError(
            f"background has {state.fields.background.n_frames} latents, dataset has {dataset.n_frames} frames")


def sample_batch(state: TrainState, dataset) -> Tuple[np.ndarray, ...]:
    """Random frames, then uniform pixels within each chosen frame."""
    rng, config = state.rng, state.config
    frames = np.sort(rng.choice(dataset.n_frames, size=min(config.frames_per_batch, dataset.n_frames), replace=False))
    origins, directions, targets, pose_ids, pixels = [], [], [], [], []
    for f in frames:
        frame = dataset.frames[int(f)]
        h, w = frame.camera.shape
        flat = rng.integers(0, h * w, size=config.rays_per_frame)
        pix = np.stack([flat // w, flat % w], axis=1)
        o, d = frame.camera.generate_rays(pix)
        origins.append(o)
        directions.append(d)
        targets.append(frame.rgb[pix[:, 0], pix[:, 1]])
        pose_ids.append(np.full(len(pix), int(f), dtype=np.int64))
        pixels.append(pix)
    return (np.concatenate(origins), np.concatenate(directions), np.concatenate(targets),
            np.concatenate(pose_ids), np.concatenate(pixels))


def train_step(state: TrainState, dataset, weights: LossWeights) -> LossReport:
    config = state.config
    origins, directions, targets, pose_ids, pixels = sample_batch(state, dataset)
    batch = state.renderer.prepare_rays(origins, directions, pose_ids, state.poses, targets=targets,
                                        pixels=pixels, rng=state.rng)
    eikonal = eikonal_points(state.rng, config.eikonal_points, state.surface_points, state.skeleton.proxy_points)
    epsilon = epsilon_schedule(state.step, config.steps, config.epsilon_start, config.epsilon_end)

    poses = state.store[POSES]
    output = state.renderer.evaluate(batch, poses)
    report = total_loss(state.renderer, batch, poses, weights, epsilon, eikonal, output=output)
    state.store.zero_grad()
    backward(report.total, state.store)
    state.optimizer.step()
    state.step += 1
    if len(output.surface_points):
        state.surface_points = output.surface_points
    return report


def train(
    dataset,
    config: TrainConfig,
    model: Optional[FieldConfig] = None,
    sampling: Optional[SamplingConfig] = None,
    weights: Optional[LossWeights] = None,
    state: Optional[TrainState] = None,
    log_path: Optional[str] = None,
    checkpoint_dir: Optional[str] = None,
    run_meta: Optional[Dict[str, Any]] = None,
    progress: bool = False,
) -> TrainState:
    """
    Run (or continue) optimization until config.steps. A passed-in state
    resumes at its step; checkpoints go to checkpoint_dir at the configured
    cadence and after the last step.
    """
    weights = weights or LossWeights()
    state = state if state is not None else build_state(dataset, config, model, sampling)
    check_dataset(state, dataset)
    state.log = TrainingLog(log_path, resume=state.step > 0)

    start = state.step
    logger.info(f"[TRAIN] Optimizing steps {start + 1}..{config.steps}")
    for _ in tqdm(range(start, config.steps), desc="train", disable=not progress):
        tic = time.perf_counter()
        report = train_step(state, dataset, weights)
        row = report.as_row()
        row.update(alpha=state.fields.density.alpha, beta=state.fields.density.beta,
                   lr_scale=state.optimizer.schedule_factor(state.step - 1), seconds=time.perf_counter() - tic)
        state.log.record(state.step, row)
        if state.step % config.log_every == 0 or state.step == 1:
            logger.info(f"[TRAIN] step {state.step}: total {row['total']:.4f} rgb {row['rgb']:.4f} "
                        f"bce {row['bce']:.4f} sparse {row['sparse']:.4f} eik {row['eikonal']:.4f} "
                        f"off {row['n_off']}/{row['n_rays']} eps {row['epsilon']:.3f}")
        if checkpoint_dir and config.checkpoint_every and state.step % config.checkpoint_every == 0:
            save_state(state, os.path.join(checkpoint_dir, checkpoint_name(state.step)), run_meta)

    if checkpoint_dir and state.step > start:
        save_state(state, os.path.join(checkpoint_dir, checkpoint_name(state.step)), run_meta)
    summary = state.log.summary()
    if summary.get("rows"):
        logger.info(f"[TRAIN] Finished at step {state.step}: total {summary['first_total']:.4f} -> "
                    f"{summary['last_total']:.4f}")
    return state


def save_state(state: TrainState, directory: str, meta: Optional[Dict[str, Any]] = None) -> str:
    alpha, beta = state.fields.density.alpha, state.fields.density.beta
    if not (alpha > 0 and beta > 0):
        raise FloatingPointError(f"density parameters left the positive range: alpha={alpha}, beta={beta}")
    arrays: Dict[str, np.ndarray] = dict(state.store.state_dict())
    optimizer_state = state.optimizer.state_dict()
    for name in state.optimizer.names:
        arrays[f"adam.m.{name}"] = optimizer_state["m"][name]
        arrays[f"adam.v.{name}"] = optimizer_state["v"][name]
    arrays["train.initial_poses"] = state.initial_poses
    arrays["train.surface_points"] = np.asarray(state.surface_points, dtype=np.float64).reshape(-1, 3)
    extra = {
        "adam_t": optimizer_state["t"],
        "rng_state": state.rng.bit_generator.state,
        "precision": state.config.precision,
        "n_frames": state.n_frames,
        "pose_dim": state.skeleton.pose_dim,
        "alpha": alpha,
        "beta": beta,
        "meta": meta or {},
    }
    return save_checkpoint(directory, state.step, arrays, extra)


def restore_state(state: TrainState, checkpoint: Checkpoint) -> TrainState:
    """Load parameters, optimizer moments, RNG and step into a freshly built state."""
    arrays = checkpoint.arrays
    if POSES in arrays and arrays[POSES].shape[0] != state.n_frames:
        raise DatasetMismatchError(f"checkpoint holds {arrays[POSES].shape[0]} frame poses, state has {state.n_frames}")
    missing = [name for name in state.store.names() if name not in arrays]
    if missing:
        raise CheckpointError(f"checkpoint {checkpoint.path} lacks parameters {missing[:5]}")
    try:
        state.store.load_state_dict({name: arrays[name] for name in state.store.names()})
    except (ShapeError, KeyError) as e:
        raise CheckpointError(f"checkpoint {checkpoint.path} does not fit the configured model: {e}") from e
    for n in state.optimizer.names:
        for moment in ("m", "v"):
            key = f"adam.{moment}.{n}"
            if key in arrays and arrays[key].shape != state.store[n].shape:
                raise CheckpointError(f"checkpoint {checkpoint.path}: '{key}' has shape {arrays[key].shape}")
    if all(f"adam.m.{n}" in arrays for n in state.optimizer.names):
        state.optimizer.load_state_dict({
            "t": checkpoint.extra.get("adam_t", checkpoint.step),
            "m": {n: arrays[f"adam.m.{n}"] for n in state.optimizer.names},
            "v": {n: arrays[f"adam.v.{n}"] for n in state.optimizer.names},
        })
    if "rng_state" in checkpoint.extra:
        state.rng.bit_generator.state = checkpoint.extra["rng_state"]
    if "train.initial_poses" in arrays:
        state.initial_poses = arrays["train.initial_poses"].astype(np.float64)
    if "train.surface_points" in arrays:
        state.surface_points = arrays["train.surface_points"].astype(np.float64)
    state.step = checkpoint.step
    logger.info(f"[CHECKPOINT] Restored step {state.step} from {checkpoint.path}")
    return state


@dataclass
class PoseErrorReport:
    """Per-frame joint-angle (degrees) and root-translation errors before and after training."""

    rows: List[Dict[str, float]]

    @property
    def mean_angle_before(self) -> float:
        return float(np.mean([r["angle_before_deg"] for r in self.rows]))

    @property
    def mean_angle_after(self) -> float:
        return float(np.mean([r["angle_after_deg"] for r in self.rows]))

    @property
    def mean_translation_before(self) -> float:
        return float(np.mean([r["translation_before"] for r in self.rows]))

    @property
    def mean_translation_after(self) -> float:
        return float(np.mean([r["translation_after"] for r in self.rows]))

    def as_rows(self) -> List[Dict[str, float]]:
        return list(self.rows)


def joint_angle_errors(estimate: np.ndarray, truth: np.ndarray, n_bones: int) -> np.ndarray:
    """Geodesic angle (degrees) between estimated and true rotations, per bone."""
    est = Rotation.from_rotvec(np.asarray(estimate)[: 3 * n_bones].reshape(n_bones, 3))
    ref = Rotation.from_rotvec(np.asarray(truth)[: 3 * n_bones].reshape(n_bones, 3))
    return np.rad2deg((est * ref.inv()).magnitude())


def pose_errors(before: np.ndarray, after: np.ndarray, truth: np.ndarray, n_bones: int) -> PoseErrorReport:
    rows = []
    for i in range(len(truth)):
        rows.append({
            "frame": i,
            "angle_before_deg": float(joint_angle_errors(before[i], truth[i], n_bones).mean()),
            "angle_after_deg": float(joint_angle_errors(after[i], truth[i], n_bones).mean()),
            "translation_before": float(np.linalg.norm(before[i][3 * n_bones:] - truth[i][3 * n_bones:])),
            "translation_after": float(np.linalg.norm(after[i][3 * n_bones:] - truth[i][3 * n_bones:])),
        })
    return PoseErrorReport(rows=rows)


def refine_poses_report(state: TrainState, dataset) -> PoseErrorReport:
    if dataset is None or dataset.n_frames == 0:
        raise MissingGroundTruthError("dataset is empty")
    truth = dataset.true_poses()
    if truth is None:
        raise MissingGroundTruthError("dataset carries no ground-truth poses")
    check_dataset(state, dataset)
    report = pose_errors(state.initial_poses, state.poses, truth, state.skeleton.n_bones)
    logger.info(f"[TRAIN] Mean joint-angle error {report.mean_angle_before:.3f} -> {report.mean_angle_after:.3f} deg")
    return report


GRADCHECK_TERMS = ("rgb", "bce", "sparse", "eikonal", "total")


def objective_gradcheck(
    state: TrainState,
    dataset,
    weights: Optional[LossWeights] = None,
    rays_per_frame: int = 2,
    n_frames: int = 2,
    eikonal_count: int = 8,
    entries_per_param: int = 4,
    step: float = 1e-6,
    tolerance: float = 1e-5,
    seed: int = 0,
) -> Dict[str, GradCheckReport]:
    """
    Finite-difference check of every loss term on one small prepared batch.

    The samples and skinning weights are fixed before checking, so the checked
    functions are smooth in the parameters (except where a ray changes its
    on/off classification, which a small step does not trigger).
    """
    weights = weights or LossWeights()
    rng = np.random.default_rng(seed)
    config = state.config.model_copy(update={"rays_per_frame": rays_per_frame, "frames_per_batch": n_frames})
    probe = TrainState(fields=state.fields, skeleton=state.skeleton, renderer=state.renderer,
                       optimizer=state.optimizer, config=config, initial_poses=state.initial_poses, rng=rng,
                       surface_points=state.surface_points)
    origins, directions, targets, pose_ids, pixels = sample_batch(probe, dataset)
    batch = state.renderer.prepare_rays(origins, directions, pose_ids, state.poses, targets=targets,
                                        pixels=pixels, rng=rng)
    eikonal = eikonal_points(rng, eikonal_count, state.surface_points, state.skeleton.proxy_points)
    epsilon = epsilon_schedule(state.step, config.steps, config.epsilon_start, config.epsilon_end)
    poses = state.store[POSES]
    trainable = [name for name, tensor in state.store.items() if tensor.requires_grad]

    reports: Dict[str, GradCheckReport] = {}
    for term in GRADCHECK_TERMS:
        def objective(term=term):
            return getattr(total_loss(state.renderer, batch, poses, weights, epsilon, eikonal), term)

        reports[term] = finite_difference_check(objective, state.store, step=step, tolerance=tolerance,
                                                names=trainable, max_entries_per_param=entries_per_param,
                                                rng=np.random.default_rng(seed + 1))
        logger.info(f"[GRADCHECK] {term}: max relative error {reports[term].max_relative_error:.3e} "
                    f"({'PASS' if reports[term].passed else 'FAIL'})")
    return reports
