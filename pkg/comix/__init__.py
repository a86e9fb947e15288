# comix/__init__.py
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .channel import Channel
from .config import ChannelConfig, ExperimentConfig, config_hash
from .envs import GridEnv, make_env
from .trainer.learner import Learner
from .trainer.replay import ReplayBuffer

__version__ = "0.1.0"

log = logging.getLogger(__name__)

# номера независимых потоков внутри одного сида
STREAM_INIT, STREAM_ACT, STREAM_NOISE, STREAM_SAMPLE, STREAM_CHANNEL = range(5)
EPISODE_TRAIN, EPISODE_EVAL = 0, 1


@dataclass
class Experiment:
    config: ExperimentConfig
    seed: int
    env: GridEnv
    channel: Channel
    learner: Learner
    buffer: ReplayBuffer
    act_rng: np.random.Generator
    noise_rng: np.random.Generator
    sample_rng: np.random.Generator

    @property
    def n_senders(self) -> int:
        return self.config.env.n_agents + self.channel_config.noisy_agents

    @property
    def channel_config(self) -> ChannelConfig:
        return self.channel.config

    def episode_seed(self, episode: int, kind: int = EPISODE_TRAIN) -> int:
        ss = np.random.SeedSequence([self.seed, self.config.env.seed, kind, episode])
        return int(ss.generate_state(1)[0])

    def with_channel(self, channel_config: ChannelConfig) -> "Experiment":
        """Та же обученная модель, другой канал (свои потоки случайности)."""
        ss = np.random.SeedSequence([self.seed, channel_config.seed, STREAM_CHANNEL])
        n_senders = self.config.env.n_agents + channel_config.noisy_agents
        channel = Channel(channel_config, n_senders, np.random.default_rng(ss))
        noise = np.random.default_rng(np.random.SeedSequence([self.seed, channel_config.seed, STREAM_NOISE]))
        return replace(self, channel=channel, noise_rng=noise)


def create_experiment(config: ExperimentConfig, seed: Optional[int] = None) -> Experiment:
    """
    Собирает среду, канал, обучающего и буфер из одного ExperimentConfig.
    Единственное место, где сид делится на независимые потоки генераторов.
    """
    seed = config.seeds[0] if seed is None else int(seed)
    streams = np.random.SeedSequence([seed, config.train.seed]).spawn(5)
    env = make_env(config.env)
    n_senders = config.env.n_agents + config.channel.noisy_agents
    chan_ss = np.random.SeedSequence([seed, config.channel.seed, STREAM_CHANNEL])
    channel = Channel(config.channel, n_senders, np.random.default_rng(chan_ss))
    learner = Learner(config.env, config.train, config.channel, np.random.default_rng(streams[STREAM_INIT]))
    buffer = ReplayBuffer(config.train.max_buffer, config.train.min_buffer)
    log.info("experiment created", extra={
        "env": config.env.kind, "n_agents": config.env.n_agents, "seed": seed,
        "config_hash": config_hash(config), "communication": config.train.communication,
    })
    return Experiment(
        config=config, seed=seed, env=env, channel=channel, learner=learner, buffer=buffer,
        act_rng=np.random.default_rng(streams[STREAM_ACT]),
        noise_rng=np.random.default_rng(streams[STREAM_NOISE]),
        sample_rng=np.random.default_rng(streams[STREAM_SAMPLE]),
    )


__all__ = ["Experiment", "create_experiment", "__version__"]
