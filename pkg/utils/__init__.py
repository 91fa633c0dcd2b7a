"""
Utils package - checkpoints and image I/O (run configuration lives in utils.config)
"""

from .checkpoint import Checkpoint, CheckpointError, latest_checkpoint, load_checkpoint, save_checkpoint
from .images import read_depth, read_mask, read_rgb, to_uint8, write_depth, write_gray, write_mask, write_rgb

__all__ = [
    'Checkpoint', 'CheckpointError', 'save_checkpoint', 'load_checkpoint', 'latest_checkpoint',
    'read_rgb', 'write_rgb', 'write_gray', 'read_mask', 'write_mask', 'read_depth', 'write_depth', 'to_uint8',
]
