from __future__ import annotations

from typing import Dict, Type

from ..config import EnvConfig
from ..errors import ConfigError
from .base import ACTION_NAMES, MOVES, GridEnv, JointState, StepResult
from .predator_prey import PredatorPreyEnv
from .switch import SwitchEnv
from .transport import TransportEnv

ENVIRONMENTS: Dict[str, Type[GridEnv]] = {
    "switch": SwitchEnv,
    "transport": TransportEnv,
    "predator_prey": PredatorPreyEnv,
}


def make_env(config: EnvConfig) -> GridEnv:
    try:
        return ENVIRONMENTS[config.kind](config)
    except KeyError as e:
        raise ConfigError(f"неизвестная среда {config.kind!r}") from e


__all__ = [
    "ACTION_NAMES", "MOVES", "ENVIRONMENTS", "GridEnv", "JointState", "StepResult",
    "PredatorPreyEnv", "SwitchEnv", "TransportEnv", "make_env",
]
