# comix/finetune.py: дообучение под сбойный канал при замороженном координаторе
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional

from . import Experiment
from .config import ChannelConfig
from .evaluation import evaluate
from .logs import RecordWriter
from .nn import checkpoint as ckpt_io
from .trainer.loop import Trainer
from .trainer.replay import ReplayBuffer

log = logging.getLogger(__name__)


@dataclass
class FinetuneReport:
    usage: float
    metric: str
    baseline: float
    before: float
    after: float
    target: float
    converged: bool
    episodes: int
    lr_q: float
    coordinator_digest_before: str
    coordinator_digest_after: str
    checkpoint: str = ""

    def as_record(self) -> Dict[str, Any]:
        return asdict(self)


def finetune(exp: Experiment, channel: ChannelConfig, run_dir: Path,
             metrics: Optional[RecordWriter] = None) -> FinetuneReport:
    """
    Координатор заморожен (lr = 0), lr Q-сетей уменьшен в lr_reduction раз,
    канал со сбоями и затуханием по возрасту. Остановка, когда метрика под сбоями
    достигает baseline − tolerance·|baseline| (baseline - полный канал до
    дообучения); иначе по исчерпании бюджета отдаётся лучший чекпоинт с warning.
    """
    ft = exp.config.finetune
    learner = exp.learner
    full = exp.channel_config.model_copy(update={"usage": 1.0, "noisy_agents": 0, "delay_scaling": False})
    disrupted = channel.model_copy(update={"delay_scaling": True})

    baseline_eval = evaluate(exp, ft.eval_episodes, full)
    baseline = baseline_eval.mean
    before = evaluate(exp, ft.eval_episodes, disrupted).mean
    target = baseline - ft.tolerance * abs(baseline)
    digest_before = learner.coordinator.parameters().digest()

    learner.freeze_coordinator()
    lr_q = exp.config.train.lr_q / ft.lr_reduction
    learner.set_q_lr(lr_q)
    learner.delay_scaling, learner.delay_rule, learner.delay_decay = (
        True, disrupted.delay_rule, disrupted.delay_decay)

    train_cfg = exp.config.train
    tuned = replace(exp.with_channel(disrupted),
                    buffer=ReplayBuffer(train_cfg.max_buffer, train_cfg.min_buffer))
    trainer = Trainer(tuned, run_dir, metrics, epsilon_override=train_cfg.epsilon_end,
                      update_coordinator=False)

    best, best_ckpt = before, learner.to_checkpoint()
    converged = before >= target
    episodes = 0
    log.info("fine-tuning started", extra={"usage": channel.usage, "baseline": baseline,
                                           "before": before, "target": target, "lr_q": lr_q})
    while not converged and episodes < ft.episodes:
        trainer.train_episode(episodes, ft.episodes)
        episodes += 1
        if episodes % ft.eval_every == 0 or episodes == ft.episodes:
            score = evaluate(tuned, ft.eval_episodes, disrupted).mean
            log.info("fine-tuning eval", extra={"episodes": episodes, "score": score})
            if score > best:
                best, best_ckpt = score, learner.to_checkpoint()
            converged = score >= target

    if not converged:
        log.warning("fine-tuning budget exhausted before reaching baseline, emitting best checkpoint",
                    extra={"best": best, "target": target, "episodes": episodes})
    learner.load_checkpoint(best_ckpt)
    learner.freeze_coordinator()

    meta = {"finetune": {"usage": channel.usage, "baseline": baseline, "after": best,
                         "converged": converged, "episodes": episodes},
            "config": exp.config.model_dump(mode="json"), "seed": exp.seed}
    path = ckpt_io.save(Path(run_dir) / "finetuned.ckpt", learner.to_checkpoint(meta))
    return FinetuneReport(
        usage=channel.usage, metric=baseline_eval.metric, baseline=baseline, before=before,
        after=best, target=target, converged=converged, episodes=episodes, lr_q=lr_q,
        coordinator_digest_before=digest_before,
        coordinator_digest_after=learner.coordinator.parameters().digest(),
        checkpoint=str(path),
    )
