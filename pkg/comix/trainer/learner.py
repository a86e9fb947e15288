# comix/trainer/learner.py: централизованное обучение: TD по Q_TOT и контрастный лосс координатора
from __future__ import annotations

import copy
import logging
from collections import deque
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..agent import AgentNet
from ..channel import delay_factors
from ..config import ChannelConfig, EnvConfig, N_ACTIONS, TrainConfig
from ..coordinator import Coordinator, mask_weights, pair_batch, peer_index
from ..errors import CheckpointError, NonFiniteError
from ..nn import RMSprop, Tensor, no_grad
from ..nn.checkpoint import Checkpoint
from .mixer import MixerNet, mixer_agent_weights
from .replay import Batch

log = logging.getLogger(__name__)


@dataclass
class StepRecord:
    """Что нужно контрастному лоссу от одного шага исполнения."""
    q_self: np.ndarray           # (n, 5)
    h_next: np.ndarray           # (n, H)
    sent: np.ndarray             # (n, P)
    delivered: np.ndarray        # (M, P)
    ages: np.ndarray             # (M,)
    state: np.ndarray            # (n * O,)


class Learner:
    """
    Владеет всеми обучаемыми параметрами: сеть агента, координатор, миксер,
    их целевые копии (агент и миксер) и два оптимизатора (θ^Q и θ^C).
    """

    def __init__(self, env: EnvConfig, train: TrainConfig, channel: ChannelConfig,
                 rng: np.random.Generator):
        self.env_config = env
        self.train_config = train
        self.n_agents = env.n_agents
        self.obs_width = env.obs_width
        self.payload_width = env.obs_width + N_ACTIONS
        self.hidden = train.hidden
        self.communication = train.communication
        self.delay_scaling = channel.delay_scaling
        self.delay_rule = channel.delay_rule
        self.delay_decay = channel.delay_decay

        self.agent = AgentNet(env.obs_width, rng, train.hidden)
        self.coordinator = Coordinator(self.payload_width, rng, train.hidden)
        self.mixer = MixerNet(env.n_agents, env.n_agents * env.obs_width, rng,
                              train.mixer_embed, train.mixer_hidden, train.hypernet_hidden)
        self.target_agent = copy.deepcopy(self.agent)
        self.target_mixer = copy.deepcopy(self.mixer)

        self.q_params = self.agent.parameters("agent.") + self.mixer.parameters("mixer.")
        self.coord_params = self.coordinator.parameters("coordinator.")
        self.q_opt = RMSprop(self.q_params, train.lr_q, train.weight_decay, train.beta2)
        self.coord_opt = RMSprop(self.coord_params, train.lr_coord, train.weight_decay, train.beta2)

        self.recent: Deque[StepRecord] = deque(maxlen=train.coord_update_interval)
        self.q_updates = 0
        self.coord_updates = 0
        self.target_updates = 0

    # ---------- Прямой проход политики ----------

    def _scale(self, ages: np.ndarray) -> Optional[np.ndarray]:
        if not self.delay_scaling:
            return None
        return delay_factors(ages, self.delay_rule, self.delay_decay)

    def policy_q(self, agent: AgentNet, q_self: Tensor, h_next: Tensor, sent: np.ndarray,
                 delivered: np.ndarray, ages: np.ndarray) -> Tuple[Tensor, np.ndarray]:
        """
        sent (B, n, P), delivered (B, M, P), ages (B, M); q_self и h_next - (B·n, ·).
        Маска считается текущим координатором без графа; возвращает Q_i (B·n, 5)
        и вероятности принятия (B·n, M-1).
        """
        B, n = sent.shape[0], sent.shape[1]
        M = delivered.shape[1]
        if not self.communication or M < 2:
            W = agent.coord_weights(h_next, np.zeros((B * n, 0, self.payload_width)), np.zeros((B * n, 0)))
            return q_self * W, np.zeros((B * n, 0))
        pairs = pair_batch(sent, delivered).reshape(B * n, M - 1, 2 * self.payload_width)
        with no_grad():
            probs = self.coordinator.accept_probs(pairs).data
        peers = peer_index(n, M)
        payloads = delivered[:, peers, :].reshape(B * n, M - 1, self.payload_width)
        scale = self._scale(ages[:, peers].reshape(B * n, M - 1))
        W = agent.coord_weights(h_next, payloads, mask_weights(probs), scale)
        return q_self * W, probs

    def q_values(self, agent: AgentNet, observations: np.ndarray, hidden, sent: np.ndarray,
                 delivered: np.ndarray, ages: np.ndarray) -> Tuple[Tensor, Tensor, Tensor, np.ndarray]:
        """observations (B, n, O) → (Q_i, Q_self, h′, probs), всё в раскладке (B·n, ·)."""
        B, n, O = observations.shape
        q_self, h_next = agent.q_self(observations.reshape(B * n, O), hidden)
        q, probs = self.policy_q(agent, q_self, h_next, sent, delivered, ages)
        return q, q_self, h_next, probs

    # ---------- TD-лосс ----------

    def td_loss(self, batch: Batch) -> Tensor:
        """
        |y_TOT − Q_TOT|, среднее по валидным шагам. y_TOT = r + γ·Q′_TOT(s′),
        действие для s′ выбирает онлайн-сеть, оценивают целевые сети; конец
        эпизода терминален.
        """
        B, T, n = batch.size, batch.steps, self.n_agents
        O = self.obs_width
        gamma = self.train_config.gamma
        h = Tensor(batch.hidden0.reshape(B * n, self.hidden))
        h_target = Tensor(batch.hidden0.reshape(B * n, self.hidden))
        online: List[Tensor] = []
        target: List[np.ndarray] = []
        for t in range(T + 1):
            with (no_grad() if t == T else nullcontext()):
                q, _, h, _ = self.q_values(self.agent, batch.observations[:, t], h,
                                           batch.sent[:, t], batch.delivered[:, t], batch.ages[:, t])
            online.append(q)
            with no_grad():
                qt, _, h_target, _ = self.q_values(self.target_agent, batch.observations[:, t], h_target,
                                                   batch.sent[:, t], batch.delivered[:, t], batch.ages[:, t])
            target.append(qt.data.reshape(B, n, N_ACTIONS))

        bi = np.arange(B)[:, None]
        ni = np.arange(n)[None, :]
        total = None
        for t in range(T):
            chosen = online[t].reshape(B, n, N_ACTIONS)[bi, ni, batch.actions[:, t]]
            q_tot = self.mixer(chosen, batch.observations[:, t].reshape(B, n * O))
            best = online[t + 1].data.reshape(B, n, N_ACTIONS).argmax(axis=-1)
            q_next = np.take_along_axis(target[t + 1], best[..., None], axis=-1)[..., 0]
            with no_grad():
                q_tot_next = self.target_mixer(q_next, batch.observations[:, t + 1].reshape(B, n * O)).data
            y = batch.rewards[:, t] + gamma * (1.0 - batch.terminal[:, t]) * q_tot_next
            err = (q_tot - y).abs() * batch.valid[:, t]
            total = err.sum() if total is None else total + err.sum()
        return total * (1.0 / max(float(batch.valid.sum()), 1.0))

    def q_update(self, batch: Batch) -> float:
        self.q_opt.zero_grad()
        loss = self.td_loss(batch)
        value = self._finite("loss_q", loss)
        loss.backward()
        self.q_opt.step()
        self.q_updates += 1
        return value

    # ---------- Контрастный лосс ----------

    def contrastive_loss(self, records: Sequence[StepRecord]) -> Tensor:
        """
        ΔQ_i = max(0, max_a Q_i(m̃) − max_a Q_i(m̄)) при замороженных Q-сетях;
        L_C = Σ_i stop(w_i·ΔQ_i)·Σ_j term_ij, среднее по шагам.
        decision: term = вероятность текущего решения (c для принятых, 1 − c для отклонённых);
        literal:  term = c.
        """
        K = len(records)
        n = self.n_agents
        if K == 0:
            return Tensor(0.0)
        sent = np.stack([r.sent for r in records])            # (K, n, P)
        delivered = np.stack([r.delivered for r in records])  # (K, M, P)
        ages = np.stack([r.ages for r in records])
        M = delivered.shape[1]
        if M < 2:
            return Tensor(0.0)
        N = K * n
        pairs = pair_batch(sent, delivered).reshape(N, M - 1, 2 * self.payload_width)
        probs = self.coordinator.accept_probs(pairs)          # (N, M-1), с графом
        c = probs.data
        hard = (c >= 0.5).astype(np.float64)
        if self.train_config.soft_contrastive:
            w_filtered, w_complement = c, 1.0 - c
        else:
            w_filtered, w_complement = hard, ((1.0 - c) >= 0.5).astype(np.float64)

        peers = peer_index(n, M)
        payloads = delivered[:, peers, :].reshape(N, M - 1, self.payload_width)
        scale = self._scale(ages[:, peers].reshape(N, M - 1))
        q_self = np.concatenate([r.q_self for r in records])
        h_next = Tensor(np.concatenate([r.h_next for r in records]))
        with no_grad():
            wf = self.agent.coord_weights(h_next, payloads, w_filtered, scale).data
            wc = self.agent.coord_weights(h_next, payloads, w_complement, scale).data
        gap = np.maximum(0.0, (q_self * wc).max(axis=-1) - (q_self * wf).max(axis=-1))
        w = mixer_agent_weights(self.mixer, np.stack([r.state for r in records])).reshape(N)
        coef = Tensor(w * gap)

        if self.train_config.contrastive_form == "decision":
            term = probs * hard + (1.0 - probs) * (1.0 - hard)
        else:
            term = probs
        return (term.sum(axis=-1) * coef).sum() * (1.0 / K)

    def coord_update(self, records: Optional[Sequence[StepRecord]] = None) -> float:
        records = list(self.recent if records is None else records)
        if not self.communication or not records or self.coord_opt.lr == 0.0:
            return 0.0
        self.coord_opt.zero_grad()
        loss = self.contrastive_loss(records)
        value = self._finite("loss_c", loss)
        if loss.requires_grad:
            loss.backward()
            self.coord_opt.step()
        self.coord_updates += 1
        return value

    # ---------- Служебное ----------

    def _finite(self, name: str, loss: Tensor) -> float:
        value = loss.item()
        if not np.isfinite(value):
            log.error("non-finite loss", extra={"loss": name, "value": repr(value)})
            raise NonFiniteError(f"{name} не является конечным числом", {"loss": name, "value": repr(value)})
        return value

    def update_targets(self) -> None:
        self.target_agent.parameters().copy_from(self.agent.parameters())
        self.target_mixer.parameters().copy_from(self.mixer.parameters())
        self.target_updates += 1

    def freeze_coordinator(self) -> None:
        self.coord_opt.lr = 0.0

    def set_q_lr(self, lr: float) -> None:
        self.q_opt.lr = float(lr)

    def digests(self) -> Dict[str, str]:
        return {
            "agent": self.agent.parameters().digest(),
            "coordinator": self.coordinator.parameters().digest(),
            "mixer": self.mixer.parameters().digest(),
        }

    # ---------- Чекпоинты ----------

    def architecture(self) -> Dict[str, Any]:
        t = self.train_config
        return {
            "env": self.env_config.kind, "n_agents": self.n_agents, "obs_width": self.obs_width,
            "hidden": self.hidden, "mixer_embed": t.mixer_embed, "mixer_hidden": t.mixer_hidden,
            "hypernet_hidden": t.hypernet_hidden,
        }

    def to_checkpoint(self, metadata: Optional[Dict[str, Any]] = None) -> Checkpoint:
        meta = {"architecture": self.architecture(), "q_updates": self.q_updates,
                "coord_updates": self.coord_updates, "target_updates": self.target_updates}
        meta.update(metadata or {})
        return Checkpoint(meta, {
            "agent": self.agent.parameters().state_dict(),
            "coordinator": self.coordinator.parameters().state_dict(),
            "mixer": self.mixer.parameters().state_dict(),
            "target_agent": self.target_agent.parameters().state_dict(),
            "target_mixer": self.target_mixer.parameters().state_dict(),
            "opt_q": self.q_opt.state_dict(),
            "opt_coord": self.coord_opt.state_dict(),
        })

    def load_checkpoint(self, ckpt: Checkpoint) -> None:
        saved = ckpt.metadata.get("architecture", {})
        mine = self.architecture()
        diff = {k: (saved.get(k), v) for k, v in mine.items() if saved.get(k) != v}
        if diff:
            detail = ", ".join(f"{k}: чекпоинт {a!r}, конфиг {b!r}" for k, (a, b) in sorted(diff.items()))
            raise CheckpointError(f"чекпоинт несовместим с конфигурацией ({detail})")
        try:
            self.agent.parameters().load_state_dict(ckpt.sections["agent"])
            self.coordinator.parameters().load_state_dict(ckpt.sections["coordinator"])
            self.mixer.parameters().load_state_dict(ckpt.sections["mixer"])
            self.target_agent.parameters().load_state_dict(
                ckpt.sections.get("target_agent", ckpt.sections["agent"]))
            self.target_mixer.parameters().load_state_dict(
                ckpt.sections.get("target_mixer", ckpt.sections["mixer"]))
        except KeyError as e:
            raise CheckpointError(f"в чекпоинте нет секции {e}") from e
        self.q_opt.load_state_dict(ckpt.sections.get("opt_q", {}))
        self.coord_opt.load_state_dict(ckpt.sections.get("opt_coord", {}))
        self.q_updates = int(ckpt.metadata.get("q_updates", 0))
        self.coord_updates = int(ckpt.metadata.get("coord_updates", 0))
        self.target_updates = int(ckpt.metadata.get("target_updates", 0))
