# comix/trainer/loop.py: цикл обучения: эпизоды, интервалы обновлений, метрики, чекпоинты
from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .. import Experiment
from ..agent import epsilon_schedule
from ..config import Config, config_hash
from ..errors import ContractViolation, NonFiniteError
from ..logs import RecordWriter
from ..nn import checkpoint as ckpt_io
from ..rollout import EpisodeSummary, run_episode
from .mixer import check_monotonicity

log = logging.getLogger(__name__)

MONOTONICITY_TOLERANCE = -1e-9


class Trainer:
    """
    Шаги среды считаются глобально: каждые q_update_interval шагов - TD-обновление
    (после прогрева буфера), каждые coord_update_interval - контрастное обновление
    координатора на свежих шагах, цели копируются по шагам или по эпизодам.
    """

    def __init__(self, exp: Experiment, run_dir: Path, metrics: Optional[RecordWriter] = None,
                 epsilon_override: Optional[float] = None, update_coordinator: bool = True,
                 trajectory_writer: Optional[RecordWriter] = None,
                 event_writer: Optional[RecordWriter] = None):
        self.exp = exp
        self.cfg = exp.config.train
        self.run_dir = Path(run_dir)
        self.metrics = metrics
        self.epsilon_override = epsilon_override
        self.update_coordinator = update_coordinator
        self.trajectory_writer = trajectory_writer
        self.event_writer = event_writer
        self.env_steps = 0
        self.episodes_done = 0
        self.last_loss_q: Optional[float] = None
        self.last_loss_c: Optional[float] = None
        self.monotonicity_rng = np.random.default_rng(np.random.SeedSequence([exp.seed, 7]))

    # ---------- Интервалы ----------

    def _on_step(self) -> None:
        self.env_steps += 1
        learner = self.exp.learner
        cfg = self.cfg
        try:
            if self.env_steps % cfg.q_update_interval == 0 and self.exp.buffer.ready:
                batch = self.exp.buffer.sample(cfg.batch_size, self.exp.sample_rng)
                self.last_loss_q = learner.q_update(batch)
            if (self.update_coordinator and learner.communication
                    and self.env_steps % cfg.coord_update_interval == 0):
                self.last_loss_c = learner.coord_update()
        except NonFiniteError:
            self._halt()
            raise
        if cfg.target_update_unit == "steps" and self.env_steps % cfg.target_update_interval == 0:
            learner.update_targets()

    def _halt(self) -> None:
        path = self.save_checkpoint("halted.ckpt", check=False)
        log.error("training halted on non-finite loss",
                  extra={"episode": self.episodes_done, "env_steps": self.env_steps, "checkpoint": str(path)})

    # ---------- Эпизоды ----------

    def epsilon(self, episode: int, total: int) -> float:
        if self.epsilon_override is not None:
            return self.epsilon_override
        c = self.cfg
        return epsilon_schedule(episode, total, c.epsilon_start, c.epsilon_end, c.epsilon_anneal_fraction)

    def train_episode(self, episode: int, total: int) -> EpisodeSummary:
        eps = self.epsilon(episode, total)
        summary = run_episode(self.exp, eps, train=True, episode=episode, on_step=self._on_step,
                              trajectory_writer=self.trajectory_writer, event_writer=self.event_writer)
        self.exp.buffer.add_episode(summary.transitions, self.cfg.recurrent_steps)
        summary.transitions = []
        self.episodes_done += 1
        if self.cfg.target_update_unit == "episodes" and self.episodes_done % self.cfg.target_update_episodes == 0:
            self.exp.learner.update_targets()
        if self.metrics is not None:
            self.metrics.write(self.metrics_record(summary, eps))
        return summary

    def metrics_record(self, summary: EpisodeSummary, epsilon: float) -> Dict[str, Any]:
        rec = {
            "episode": summary.episode,
            "seed": self.exp.seed,
            "env_steps": self.env_steps,
            "agent_returns": [round(r, 10) for r in summary.agent_returns],
            "team_return": summary.team_return,
            "headline": summary.headline,
            "epsilon": epsilon,
            "loss_q": self.last_loss_q,
            "loss_c": self.last_loss_c,
            "accepted_fraction": summary.accepted_fraction,
        }
        if Config.WALL_CLOCK:
            rec["wall_clock"] = time.time()
        return rec

    def run(self, episodes: Optional[int] = None) -> Path:
        total = episodes or self.cfg.episodes
        log.info("training started", extra={"episodes": total, "seed": self.exp.seed,
                                            "env": self.exp.config.env.kind})
        for ep in range(total):
            self.train_episode(ep, total)
            if (ep + 1) % self.cfg.checkpoint_every == 0 and ep + 1 < total:
                self.save_checkpoint(f"episode_{ep + 1:06d}.ckpt")
        path = self.save_checkpoint("final.ckpt")
        log.info("training finished", extra={"episodes": total, "env_steps": self.env_steps,
                                             "checkpoint": str(path)})
        return path

    # ---------- Чекпоинты ----------

    def save_checkpoint(self, name: str, check: bool = True) -> Path:
        meta: Dict[str, Any] = {
            "config": self.exp.config.model_dump(mode="json"),
            "config_hash": config_hash(self.exp.config),
            "seed": self.exp.seed,
            "episodes": self.episodes_done,
            "env_steps": self.env_steps,
        }
        if check and self.cfg.monotonicity_draws:
            slope = check_monotonicity(self.exp.learner.mixer, self.cfg.monotonicity_draws, self.monotonicity_rng)
            meta["monotonicity_min_slope"] = slope
            if slope < MONOTONICITY_TOLERANCE:
                raise ContractViolation(f"нарушена монотонность миксера: наклон {slope:.3e}")
        path = ckpt_io.save(self.run_dir / name, self.exp.learner.to_checkpoint(meta))
        log.info("checkpoint saved", extra={"path": str(path), "episodes": self.episodes_done})
        return path
