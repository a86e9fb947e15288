# comix/config.py: настройки процесса (env) и модели конфигурации эксперимента
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


def env_bool(key: str, default: bool = False) -> bool:
    return str(os.getenv(key, str(default))).strip().lower() in {"1", "true", "t", "yes", "y", "on"}


class Config:
    # Каталог результатов (чекпоинты, метрики, отчёты)
    OUTPUT_DIR = os.getenv("COMIX_OUTPUT_DIR", "runs")

    # === Логи ===
    LOG_LEVEL = os.getenv("COMIX_LOG_LEVEL", "INFO")
    # пусто → <output_dir>/comix.ndjson
    LOG_FILE = os.getenv("COMIX_LOG_FILE")
    # Время выполнения в записях метрик ломает побайтовую воспроизводимость, поэтому выключено
    WALL_CLOCK = env_bool("COMIX_WALL_CLOCK", False)

    # Параллельные сиды (процессы)
    WORKERS = int(os.getenv("COMIX_WORKERS", "1"))


EnvKind = Literal["switch", "transport", "predator_prey"]

N_ACTIONS = 5
OBS_WIDTH = {"switch": 4, "transport": 30, "predator_prey": 77}
PREDATOR_PREY_MAPS = {4: 12, 8: 14, 16: 16}


# ---------- Пресеты из таблиц ----------

def env_preset(kind: str, n_agents: int | None = None) -> Dict[str, Any]:
    """Значения из таблицы параметров сред для (kind, n_agents)."""
    if kind == "switch":
        return dict(kind=kind, width=7, height=3, n_agents=4, n_entities=0, obs_width=4,
                    step_reward=0.0, intermediary_reward=0.0, goal_reward=5.0,
                    obstacle_fraction=0.0, max_steps=50)
    if kind == "transport":
        n = n_agents or 4
        return dict(kind=kind, width=16, height=10, n_agents=n, n_entities=n // 2, obs_width=30,
                    step_reward=0.0, intermediary_reward=0.5, goal_reward=5.0,
                    obstacle_fraction=0.1, max_steps=100, goal_distance=15)
    if kind == "predator_prey":
        n = n_agents or 4
        side = PREDATOR_PREY_MAPS.get(n, 12)
        return dict(kind=kind, width=side, height=side, n_agents=n, n_entities=16, obs_width=77,
                    step_reward=0.0, intermediary_reward=0.1, goal_reward=5.0,
                    obstacle_fraction=0.0, max_steps=200)
    raise ConfigError(f"неизвестная среда {kind!r}")


def train_preset(kind: str) -> Dict[str, Any]:
    """Значения из таблицы гиперпараметров обучения, зависящие от среды."""
    return dict(
        recurrent_steps=10 if kind == "predator_prey" else 2,
        min_buffer=1000 if kind == "switch" else 5000,
    )


# ---------- Модели ----------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class EnvConfig(_Strict):
    kind: EnvKind = "switch"
    width: int = Field(7, gt=0)
    height: int = Field(3, gt=0)
    n_agents: int = Field(4, gt=0)
    n_entities: int = Field(0, ge=0)
    obs_width: int = 4
    n_actions: int = N_ACTIONS
    step_reward: float = 0.0
    intermediary_reward: float = 0.0
    goal_reward: float = 5.0
    obstacle_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    max_steps: int = Field(50, gt=0)
    goal_distance: int = Field(15, gt=0)
    # transport: 0.5 за новый минимум расстояния (new_best) или за любое сокращение (decrease)
    intermediary_rule: Literal["new_best", "decrease"] = "new_best"
    seed: int = 0

    @model_validator(mode="after")
    def _check_table(self):
        if self.n_actions != N_ACTIONS:
            raise ValueError(f"n_actions должно быть {N_ACTIONS}")
        if self.obs_width != OBS_WIDTH[self.kind]:
            raise ValueError(f"obs_width для {self.kind} равно {OBS_WIDTH[self.kind]}")
        if self.kind == "switch" and (self.width, self.height, self.n_agents) != (7, 3, 4):
            raise ValueError("switch: карта 7x3 и 4 агента")
        if self.kind == "transport":
            if (self.width, self.height) != (16, 10):
                raise ValueError("transport: карта 16x10")
            if self.n_agents % 2 or self.n_entities != self.n_agents // 2:
                raise ValueError("transport: агенты парами, по одному грузу на пару")
        if self.kind == "predator_prey" and (self.width != self.height or self.width not in (12, 14, 16)):
            raise ValueError("predator_prey: квадратная карта 12/14/16")
        return self


class TrainConfig(_Strict):
    gamma: float = Field(0.99, ge=0.0, le=1.0)
    batch_size: int = Field(512, gt=0)
    recurrent_steps: int = Field(2, gt=0)
    q_update_interval: int = Field(50, gt=0)
    coord_update_interval: int = Field(50, gt=0)
    target_update_interval: int = Field(20000, gt=0)
    target_update_unit: Literal["steps", "episodes"] = "steps"
    target_update_episodes: int = Field(100, gt=0)
    lr_q: float = Field(1e-4, ge=0.0)
    lr_coord: float = Field(5e-5, ge=0.0)
    weight_decay: float = Field(1e-5, ge=0.0)
    beta1: float = 0.9   # в таблице есть; RMSprop без момента его не использует
    beta2: float = 0.99
    min_buffer: int = Field(1000, gt=0)
    max_buffer: int = Field(20000, gt=0)
    episodes: int = Field(20000, gt=0)
    seed: int = 0
    hidden: int = Field(128, gt=1)
    mixer_embed: int = Field(32, gt=0)
    mixer_hidden: int = Field(16, gt=0)
    hypernet_hidden: int = Field(64, gt=0)
    epsilon_start: float = Field(1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(0.05, ge=0.0, le=1.0)
    epsilon_anneal_fraction: float = Field(0.5, gt=0.0, le=1.0)
    communication: bool = True
    soft_contrastive: bool = False
    contrastive_form: Literal["decision", "literal"] = "decision"
    checkpoint_every: int = Field(500, gt=0)
    monotonicity_draws: int = Field(1000, ge=0)

    @model_validator(mode="after")
    def _check_buffer(self):
        if self.min_buffer > self.max_buffer:
            raise ValueError("min_buffer больше max_buffer")
        return self


class ChannelConfig(_Strict):
    usage: float = Field(1.0, ge=0.0, le=1.0)
    burst_mean: float = Field(4.0, ge=1.0)
    noisy_agents: int = Field(0, ge=0)
    delay_scaling: bool = False
    delay_rule: Literal["inverse", "exponential"] = "inverse"
    delay_decay: float = Field(0.9, gt=0.0, lt=1.0)
    seed: int = 0
    log_events: bool = False


class FinetuneConfig(_Strict):
    lr_reduction: float = Field(100.0, gt=0.0)
    tolerance: float = Field(0.01, ge=0.0)
    episodes: int = Field(2000, gt=0)
    eval_every: int = Field(100, gt=0)
    eval_episodes: int = Field(20, gt=0)


class ExperimentConfig(_Strict):
    env: EnvConfig = Field(default_factory=EnvConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)
    output_dir: str = Field(default_factory=lambda: Config.OUTPUT_DIR)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])

    @model_validator(mode="before")
    @classmethod
    def _fill_presets(cls, data: Any):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        env = data.get("env") or {}
        if not isinstance(env, dict):
            return data
        kind = env.get("kind", "switch")
        try:
            env = {**env_preset(kind, env.get("n_agents")), **env}
        except ConfigError:
            # пусть pydantic сам сообщит про неверный kind
            pass
        data["env"] = env
        train = data.get("train") or {}
        if isinstance(train, dict):
            data["train"] = {**train_preset(kind), **train}
        return data

    @field_validator("seeds")
    @classmethod
    def _seeds_nonempty(cls, v: List[int]):
        if not v:
            raise ValueError("нужен хотя бы один сид")
        return v


# ---------- Загрузка / сохранение ----------

def load_config(path: Union[str, Path, None] = None, overrides: Dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Читает YAML с секциями env / train / channel / finetune / output_dir / seeds.
    Отсутствующий путь → чистые дефолты из таблиц. ValidationError пробрасывается как есть.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"конфиг не найден: {p}")
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: ожидается словарь секций верхнего уровня")
    for dotted, value in (overrides or {}).items():
        node = data
        *head, last = dotted.split(".")
        for key in head:
            node = node.setdefault(key, {})
        node[last] = value
    return ExperimentConfig.model_validate(data)


def dump_config(cfg: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False, allow_unicode=True),
                    encoding="utf-8")
    return path


def config_hash(cfg: BaseModel) -> str:
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def describe_validation_error(err: ValidationError) -> List[str]:
    """Построчная диагностика по полям: 'train.lr_q: ...'."""
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e.get("loc", ()))
        lines.append(f"{loc or '<root>'}: {e.get('msg')}")
    return lines
