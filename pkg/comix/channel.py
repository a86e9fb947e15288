# comix/channel.py: широковещательный канал с потерями, устаревшими сообщениями и шумовыми агентами
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .agent import Message
from .config import N_ACTIONS, ChannelConfig
from .errors import ContractViolation
from .nn import Tensor

log = logging.getLogger(__name__)

USAGE_SWEEP = (1.0, 0.5, 0.25, 0.10, 0.0)


# ---------- Процесс потерь ----------

def burst_rates(usage: float, burst_mean: float) -> Tuple[float, float]:
    """
    Двухсостояний процесс (доставка / серия потерь). Возвращает
    (p_drop: good → bad, p_recover: bad → good) так, что стационарная доля
    доставки равна usage, а средняя длина серии потерь - burst_mean.
    """
    if usage >= 1.0:
        return 0.0, 1.0
    if usage <= 0.0:
        return 1.0, 0.0
    p_recover = 1.0 / burst_mean
    p_drop = p_recover * (1.0 - usage) / usage
    if p_drop > 1.0:
        # серии длиннее среднего: иначе долю не получить
        p_drop = 1.0
        p_recover = usage / (1.0 - usage)
    return p_drop, p_recover


def delay_factors(ages: np.ndarray, rule: str = "inverse", decay: float = 0.9) -> np.ndarray:
    ages = np.asarray(ages, dtype=np.float64)
    if np.any(ages < 0):
        raise ContractViolation("возраст сообщения отрицательный")
    if rule == "inverse":
        return 1.0 / (1.0 + ages)
    if rule == "exponential":
        return decay ** ages
    raise ContractViolation(f"неизвестное правило затухания {rule!r}")


def delay_scale(features, age, rule: str = "inverse", decay: float = 0.9):
    """Признаки закодированного сообщения × 1/(1+age) (или decay**age)."""
    factor = delay_factors(np.asarray(age), rule, decay)
    if isinstance(features, Tensor):
        return features * Tensor(factor[..., None] if factor.ndim else factor)
    features = np.asarray(features, dtype=np.float64)
    return features * (factor[..., None] if factor.ndim else factor)


# ---------- Шумовые агенты ----------

def noisy_payloads(count: int, payload_width: int, rng: np.random.Generator) -> np.ndarray:
    if count < 0:
        raise ContractViolation("число шумовых агентов отрицательное")
    return rng.integers(0, 2, size=(count, payload_width)).astype(np.float64)


def noisy_messages(count: int, payload_width: int, rng: np.random.Generator,
                   first_sender: int) -> List[Message]:
    """Сообщения из случайных битов от отправителей first_sender, first_sender+1, …"""
    bits = noisy_payloads(count, payload_width, rng)
    obs_width = payload_width - N_ACTIONS
    return [Message(first_sender + k, row[:obs_width], row[obs_width:]) for k, row in enumerate(bits)]


# ---------- Канал ----------

@dataclass
class MailboxEntry:
    payload: np.ndarray
    age: int = 0


class Channel:
    """
    Один экземпляр на среду. Каждый отправитель независимо проходит через
    процесс серийных потерь; на потере получатели видят последнюю доставленную
    версию с возрастом. Первый шаг эпизода доставляется всегда.
    """

    def __init__(self, config: ChannelConfig, n_senders: int, rng: Optional[np.random.Generator] = None):
        self.config = config
        self.n_senders = n_senders
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.p_drop, self.p_recover = burst_rates(config.usage, config.burst_mean)
        self.mailbox: List[Optional[MailboxEntry]] = [None] * n_senders
        self.dropping = np.zeros(n_senders, dtype=bool)
        self.events: List[Dict[str, Any]] = []
        self.delivered_count = 0
        self.sent_count = 0

    def reset(self) -> None:
        self.mailbox = [None] * self.n_senders
        self.dropping[:] = False

    def _gate(self, step: int) -> np.ndarray:
        """Маска доставки на этом шаге (M,)."""
        if step == 0:
            self.dropping[:] = False
            return np.ones(self.n_senders, dtype=bool)
        u = self.rng.random(self.n_senders)
        flip = np.where(self.dropping, u < self.p_recover, u < self.p_drop)
        self.dropping = self.dropping ^ flip
        return ~self.dropping

    def broadcast_payloads(self, payloads: np.ndarray, step: int) -> Tuple[np.ndarray, np.ndarray]:
        """(M, P) отправленное → (M, P) доставленное и возрасты (M,)."""
        payloads = np.asarray(payloads, dtype=np.float64)
        if payloads.shape[0] != self.n_senders:
            raise ContractViolation(f"ожидается {self.n_senders} сообщений, получено {payloads.shape[0]}")
        deliver = self._gate(step)
        out = np.empty_like(payloads)
        ages = np.zeros(self.n_senders, dtype=np.int64)
        for j in range(self.n_senders):
            entry = self.mailbox[j]
            if deliver[j] or entry is None:
                entry = MailboxEntry(payloads[j].copy(), 0)
            else:
                entry.age += 1
            self.mailbox[j] = entry
            out[j] = entry.payload
            ages[j] = entry.age
            if self.config.log_events:
                self.events.append({"step": step, "sender": j,
                                    "status": "delivered" if entry.age == 0 else "dropped",
                                    "age": int(entry.age)})
        self.sent_count += self.n_senders
        self.delivered_count += int((ages == 0).sum())
        return out, ages

    def broadcast(self, messages: Sequence[Message], step: int) -> List[Message]:
        ordered = sorted(messages, key=lambda m: m.sender)
        if [m.sender for m in ordered] != list(range(self.n_senders)):
            raise ContractViolation("рассылка должна содержать ровно одно сообщение от каждого отправителя")
        delivered, ages = self.broadcast_payloads(np.stack([m.payload for m in ordered]), step)
        obs_width = delivered.shape[1] - N_ACTIONS
        return [Message(m.sender, delivered[j, :obs_width], delivered[j, obs_width:], int(ages[j]))
                for j, m in enumerate(ordered)]

    @property
    def delivery_rate(self) -> float:
        return self.delivered_count / self.sent_count if self.sent_count else 1.0

    def drain_events(self) -> List[Dict[str, Any]]:
        events, self.events = self.events, []
        return events
