"""
Optimize package - Adam, the global training loop and the training log store
"""

from .adam import Adam, NonFiniteGradientError, adam_step
from .training_log import TrainingLog, read_log
from .trainer import (
    DatasetMismatchError,
    MissingGroundTruthError,
    PoseErrorReport,
    TrainConfig,
    TrainState,
    build_state,
    check_dataset,
    objective_gradcheck,
    joint_angle_errors,
    pose_errors,
    refine_poses_report,
    restore_state,
    sample_batch,
    save_state,
    train,
    train_step,
)

__all__ = [
    'Adam', 'adam_step', 'TrainConfig', 'TrainState', 'TrainingLog', 'read_log', 'PoseErrorReport',
    'build_state', 'check_dataset', 'sample_batch', 'train_step', 'train', 'save_state', 'restore_state',
    'refine_poses_report', 'pose_errors', 'joint_angle_errors', 'objective_gradcheck',
    'NonFiniteGradientError', 'DatasetMismatchError', 'MissingGroundTruthError',
]
