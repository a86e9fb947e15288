from pathlib import Path

import numpy as np
import pytest
import yaml

from comix import create_experiment
from comix.config import ExperimentConfig

TINY_TRAIN = {
    "hidden": 4,
    "mixer_embed": 3,
    "mixer_hidden": 2,
    "hypernet_hidden": 4,
    "batch_size": 4,
    "min_buffer": 20,
    "max_buffer": 400,
    "q_update_interval": 5,
    "coord_update_interval": 5,
    "target_update_interval": 50,
    "checkpoint_every": 1000,
    "monotonicity_draws": 20,
    "episodes": 3,
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def tiny_config(kind: str = "switch", n_agents=None, tmp_path=None, **train) -> ExperimentConfig:
    env = {"kind": kind}
    if n_agents is not None:
        env["n_agents"] = n_agents
    data = {"env": env, "train": {**TINY_TRAIN, **train}, "seeds": [0]}
    if tmp_path is not None:
        data["output_dir"] = str(tmp_path)
    return ExperimentConfig.model_validate(data)


@pytest.fixture
def tiny_experiment(tmp_path):
    def build(kind: str = "switch", n_agents=None, seed: int = 0, **train):
        return create_experiment(tiny_config(kind, n_agents, tmp_path, **train), seed=seed)
    return build


@pytest.fixture
def write_config(tmp_path):
    def write(data: dict, name: str = "config.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path
    return write
