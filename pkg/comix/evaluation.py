# comix/evaluation.py: оценка жадной политики, развёртка по каналу, анализ масок, сглаживание
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import EPISODE_EVAL, Experiment
from .channel import USAGE_SWEEP
from .config import ChannelConfig
from .logs import RecordWriter
from .rollout import run_episode

log = logging.getLogger(__name__)

HEADLINE_NAMES = {
    "switch": "normalized_reward",
    "transport": "completion_pct",
    "predator_prey": "prey_captured",
}


@dataclass
class EvalSummary:
    metric: str
    mean: float
    std: float
    episodes: int
    values: List[float] = field(default_factory=list)
    accepted_fraction: float = 0.0
    accepted_std: float = 0.0
    delivery_rate: float = 1.0

    def as_record(self) -> Dict:
        return asdict(self)


def evaluate(exp: Experiment, episodes: int, channel: Optional[ChannelConfig] = None,
             mask_writer: Optional[RecordWriter] = None,
             trajectory_writer: Optional[RecordWriter] = None) -> EvalSummary:
    """Жадная политика (ε = 0); эпизоды оценки посеяны отдельно от обучающих."""
    run = exp.with_channel(channel if channel is not None else exp.channel_config)
    learner = exp.learner
    saved = (learner.delay_scaling, learner.delay_rule, learner.delay_decay)
    cc = run.channel_config
    learner.delay_scaling, learner.delay_rule, learner.delay_decay = cc.delay_scaling, cc.delay_rule, cc.delay_decay
    values, accepted = [], []
    try:
        for k in range(episodes):
            s = run_episode(run, 0.0, train=False, episode=k, seed=run.episode_seed(k, EPISODE_EVAL),
                            mask_writer=mask_writer, trajectory_writer=trajectory_writer)
            values.append(s.headline)
            accepted.append(s.accepted_fraction)
    finally:
        learner.delay_scaling, learner.delay_rule, learner.delay_decay = saved
    return EvalSummary(
        metric=HEADLINE_NAMES[exp.config.env.kind],
        mean=float(np.mean(values)), std=float(np.std(values)), episodes=episodes,
        values=[float(v) for v in values],
        accepted_fraction=float(np.mean(accepted)), accepted_std=float(np.std(accepted)),
        delivery_rate=run.channel.delivery_rate,
    )


def disrupt(exp: Experiment, episodes: int, usages: Sequence[float] = USAGE_SWEEP,
            delay_scaling: Optional[bool] = None) -> List[Dict]:
    """Ячейки «использование канала → метрика»; каждая ячейка со своими фиксированными сидами."""
    rows = []
    for usage in usages:
        update = {"usage": float(usage)}
        if delay_scaling is not None:
            update["delay_scaling"] = delay_scaling
        cfg = exp.channel_config.model_copy(update=update)
        s = evaluate(exp, episodes, cfg)
        rows.append({"usage": float(usage), "metric": s.metric, "mean": s.mean, "std": s.std,
                     "episodes": episodes, "delivery_rate": s.delivery_rate})
        log.info("disruption cell", extra={"usage": usage, "mean": s.mean})
    return rows


def comm_analysis(exp: Experiment, episodes: int, noisy_counts: Iterable[int] = (0, 4),
                  mask_writer: Optional[RecordWriter] = None) -> List[Dict]:
    """Доля принятых сообщений (нормированная на настоящих агентов) без шума и с шумовыми агентами."""
    rows = []
    for count in noisy_counts:
        cfg = exp.channel_config.model_copy(update={"noisy_agents": int(count)})
        s = evaluate(exp, episodes, cfg, mask_writer=mask_writer)
        rows.append({"noisy_agents": int(count), "accepted_fraction": s.accepted_fraction,
                     "accepted_std": s.accepted_std, "metric": s.metric, "mean": s.mean,
                     "episodes": episodes})
    return rows


# ---------- Сглаживание кривых ----------

def smooth_rolling(series: Sequence[float], window: int = 200) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Скользящее среднее с огибающими min/max; окно в начале ряда укорочено."""
    x = np.asarray(series, dtype=np.float64)
    mean, lo, hi = np.empty_like(x), np.empty_like(x), np.empty_like(x)
    for i in range(len(x)):
        chunk = x[max(0, i - window + 1): i + 1]
        mean[i], lo[i], hi[i] = chunk.mean(), chunk.min(), chunk.max()
    return mean, lo, hi


def smooth_ema(series: Sequence[float], alpha: float = 0.95) -> np.ndarray:
    """s_t = alpha·s_{t-1} + (1 − alpha)·x_t, s_0 = x_0."""
    x = np.asarray(series, dtype=np.float64)
    out = np.empty_like(x)
    acc = None
    for i, v in enumerate(x):
        acc = v if acc is None else alpha * acc + (1.0 - alpha) * v
        out[i] = acc
    return out


def format_table(rows: Sequence[Dict], columns: Sequence[str]) -> str:
    """Простая текстовая таблица для отчётов."""
    def cell(v) -> str:
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    body = [[cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    line = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line, sep] + ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body])
