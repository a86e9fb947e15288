# comix/agent.py: двухэтапная Q-политика агента: Q_self, затем взвешивание сообщениями
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import N_ACTIONS
from .errors import ConfigError, ContractViolation
from .nn import MLP, GRUCell, LayerNorm, Module, Tensor, concat, linear

DEFAULT_HIDDEN = 128


# ---------- Сообщение ----------

def one_hot(index: int, width: int = N_ACTIONS) -> np.ndarray:
    v = np.zeros(width)
    v[int(index)] = 1.0
    return v


@dataclass(frozen=True)
class Message:
    """
    m_i = <s_i, â_i>: наблюдение и намерение (action_bits, one-hot у настоящих
    агентов, случайные биты у шумовых). age - сколько шагов сообщение не обновлялось.
    """

    sender: int
    observation: np.ndarray = field(compare=False, repr=False)
    action_bits: np.ndarray = field(compare=False, repr=False)
    age: int = 0

    def __post_init__(self):
        if self.age < 0:
            raise ContractViolation(f"возраст сообщения отрицательный: {self.age}")
        if len(self.action_bits) != N_ACTIONS:
            raise ContractViolation(f"поле действия шириной {len(self.action_bits)} вместо {N_ACTIONS}")

    @classmethod
    def intent(cls, sender: int, observation: np.ndarray, action: int) -> "Message":
        if not 0 <= int(action) < N_ACTIONS:
            raise ContractViolation(f"действие {action} вне диапазона")
        return cls(sender, np.asarray(observation, dtype=np.float64), one_hot(action))

    @property
    def action(self) -> int:
        return int(np.argmax(self.action_bits))

    @property
    def payload(self) -> np.ndarray:
        return np.concatenate([self.observation, self.action_bits])

    def aged(self, age: int) -> "Message":
        return Message(self.sender, self.observation, self.action_bits, age)


def intent_payloads(observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """(…, O) и (…) → (…, O + 5): пакетная версия Message.intent(...).payload."""
    hot = np.eye(N_ACTIONS)[np.asarray(actions, dtype=np.int64)]
    return np.concatenate([np.asarray(observations, dtype=np.float64), hot], axis=-1)


# ---------- Сеть агента ----------

class AgentNet(Module):
    """
    Общая для всех агентов сеть:
      features  : MLP obs → H → H (ReLU)
      gru, norm : GRU H + layer-norm
      head      : Linear H → 5
      encoder   : MLP (obs + 5) → H → H (ReLU), кодирует сообщения на стороне получателя
      coord     : MLP (2H) → H (ReLU) → 5 (Sigmoid)
    """

    def __init__(self, obs_width: int, rng: np.random.Generator, hidden: int = DEFAULT_HIDDEN):
        super().__init__()
        self.obs_width = obs_width
        self.hidden = hidden
        self.payload_width = obs_width + N_ACTIONS
        self.features = self.add_module("features", MLP([obs_width, hidden, hidden], ["relu", "relu"], rng))
        self.gru = self.add_module("gru", GRUCell(hidden, hidden, rng))
        self.norm = self.add_module("norm", LayerNorm(hidden))
        self.head = self.add_module("head", linear(hidden, N_ACTIONS, rng))
        self.encoder = self.add_module(
            "encoder", MLP([self.payload_width, hidden, hidden], ["relu", "relu"], rng))
        self.coord = self.add_module(
            "coord", MLP([2 * hidden, hidden, N_ACTIONS], ["relu", "sigmoid"], rng))

    def initial_hidden(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden))

    def q_self(self, observation, hidden) -> Tuple[Tensor, Tensor]:
        """(B, O), (B, H) → Q_self (B, 5) и h′ (B, H)."""
        obs = observation if isinstance(observation, Tensor) else Tensor(observation)
        h = hidden if isinstance(hidden, Tensor) else Tensor(hidden)
        if obs.shape[-1] != self.obs_width:
            raise ConfigError(f"наблюдение ширины {obs.shape[-1]}, сеть ждёт {self.obs_width}")
        h_next = self.gru(self.features(obs), h)
        return self.head(self.norm(h_next)), h_next

    def coord_weights(self, h_next: Tensor, payloads: np.ndarray, weights: np.ndarray,
                      scale: Optional[np.ndarray] = None) -> Tensor:
        """
        h′ (B, H); payloads (B, K, P) - входящие сообщения; weights (B, K) - маска
        (жёсткие биты или мягкие вероятности); scale (B, K) - затухание по возрасту.
        Среднее по принятым: Σ m_j·enc_j / max(Σ m_j, 1); пустое множество → нулевой вектор.
        """
        B = h_next.shape[0]
        payloads = np.asarray(payloads, dtype=np.float64)
        K = payloads.shape[1] if payloads.ndim == 3 else 0
        if K == 0:
            avg = Tensor(np.zeros((B, self.hidden)))
        else:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (B, K):
                raise ContractViolation(f"маска {weights.shape} не совпадает с сообщениями {(B, K)}")
            enc = self.encoder(Tensor(payloads.reshape(B * K, -1))).reshape(B, K, self.hidden)
            w = weights if scale is None else weights * scale
            denom = np.maximum(weights.sum(axis=1, keepdims=True), 1.0)
            avg = (enc * Tensor((w / denom)[..., None])).sum(axis=1)
        return self.coord(concat([h_next, avg], axis=-1))


def q_combined(q_self, w) -> Tensor:
    """Q_i = Q_self ⊙ W_coord."""
    q = q_self if isinstance(q_self, Tensor) else Tensor(q_self)
    if q.shape[-1] != N_ACTIONS or w.shape[-1] != N_ACTIONS:
        raise ContractViolation("q_combined: обе части должны иметь ширину 5")
    return q * w


def intention(q_self) -> int | np.ndarray:
    """argmax с выбором наименьшего индекса при равенстве."""
    data = q_self.data if isinstance(q_self, Tensor) else np.asarray(q_self)
    idx = np.argmax(data, axis=-1)
    return int(idx) if np.ndim(idx) == 0 else idx


def act(q, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ContractViolation(f"epsilon вне [0, 1]: {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(intention(q))


def act_batch(q, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """act по строкам (n, 5); генератор расходуется строго в порядке агентов."""
    data = q.data if isinstance(q, Tensor) else np.asarray(q)
    return np.array([act(row, epsilon, rng) for row in data], dtype=np.int64)


def epsilon_schedule(episode: int, total_episodes: int, start: float = 1.0, end: float = 0.05,
                     anneal_fraction: float = 0.5) -> float:
    """Линейно start → end за первые anneal_fraction эпизодов, дальше end."""
    horizon = max(1.0, anneal_fraction * total_episodes)
    frac = min(1.0, episode / horizon)
    return float(start + (end - start) * frac)


def coord_weights_for(agent: AgentNet, h_next: Tensor, accepted: Sequence[Message],
                      scale: Optional[Sequence[float]] = None) -> Tensor:
    """coord_weights для одного агента по уже отфильтрованному списку сообщений."""
    h = h_next.reshape(1, -1) if h_next.ndim == 1 else h_next
    if not accepted:
        return agent.coord_weights(h, np.zeros((1, 0, agent.payload_width)), np.zeros((1, 0)))
    payloads = np.stack([m.payload for m in accepted])[None]
    ones = np.ones((1, len(accepted)))
    sc = None if scale is None else np.asarray(scale, dtype=np.float64)[None]
    return agent.coord_weights(h, payloads, ones, sc)
