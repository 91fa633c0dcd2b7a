"""
Run Configuration - one JSON document with dotted command-line overrides

Process-level settings come from the environment (or a .env file):
AVATAR_CONFIG (default config path), AVATAR_LOG_LEVEL, AVATAR_NUM_WORKERS.
"""

import json
import os
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from fields import FieldConfig
from objectives import LossWeights
from optimize import TrainConfig
from render import SamplingConfig
from synthetic import SyntheticSceneSpec

load_dotenv()


class ConfigError(ValueError):
    """Configuration file or override is invalid."""


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mesh_resolution: int = Field(128, ge=8)
    mesh_bound: float = Field(1.0, gt=0)
    surface_samples: int = Field(100000, ge=1)
    volume_resolution: int = Field(64, ge=8)
    mask_thresholds: List[float] = Field(default_factory=lambda: [0.3, 0.5, 0.7])
    posed_frames: Optional[List[int]] = Field(None, description="frames for posed meshes; null means all")
    seed: int = 0


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene: SyntheticSceneSpec = Field(default_factory=SyntheticSceneSpec)
    model: FieldConfig = Field(default_factory=FieldConfig)
    render: SamplingConfig = Field(default_factory=SamplingConfig)
    loss: LossWeights = Field(default_factory=LossWeights)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    dataset_dir: str = "runs/dataset"
    output_dir: str = "runs/output"
    checkpoint: Optional[str] = None
    n_jobs: int = Field(1, ge=1)


def parse_override(item: str) -> tuple:
    """'a.b.c=value' -> (['a', 'b', 'c'], value); value is JSON when it parses."""
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key.path=value")
    key, raw = item.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigError(f"override '{item}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for item in overrides:
        path, value = parse_override(item)
        node = data
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override '{item}': '{part}' is not a section")
            node = child
        node[path[-1]] = value
    return data


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """
    Resolve the run configuration: file (or AVATAR_CONFIG), then overrides,
    then AVATAR_NUM_WORKERS.
    """
    path = path or os.environ.get("AVATAR_CONFIG")
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    data = apply_overrides(data, overrides)
    workers = os.environ.get("AVATAR_NUM_WORKERS")
    if workers:
        try:
            data["n_jobs"] = int(workers)
        except ValueError as e:
            raise ConfigError(f"AVATAR_NUM_WORKERS must be an integer, got '{workers}'") from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration:\n{e}") from e


def dump_config(config: RunConfig) -> str:
    return config.model_dump_json(indent=2)


def log_level() -> str:
    return os.environ.get("AVATAR_LOG_LEVEL", "INFO").upper()
