# comix/trainer/replay.py: буфер эпизодных сегментов фиксированной длины
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, fields
from typing import Deque, List

import numpy as np

from ..errors import ContractViolation


@dataclass
class Transition:
    observations: np.ndarray     # (n, O)
    hidden: np.ndarray           # (n, H) до шага
    sent: np.ndarray             # (n, P) свежие собственные сообщения
    delivered: np.ndarray        # (M, P) что пришло по каналу
    ages: np.ndarray             # (M,)
    actions: np.ndarray          # (n,)
    reward: float                # командная награда
    next_observations: np.ndarray


@dataclass
class Segment:
    """
    T шагов одного эпизода. Поля с осью T+1 содержат и следующий шаг
    (для цели TD); хвост после конца эпизода заполнен нулями и valid=0.
    """
    hidden0: np.ndarray          # (n, H)
    observations: np.ndarray     # (T+1, n, O)
    sent: np.ndarray             # (T+1, n, P)
    delivered: np.ndarray        # (T+1, M, P)
    ages: np.ndarray             # (T+1, M)
    actions: np.ndarray          # (T, n)
    rewards: np.ndarray          # (T,)
    terminal: np.ndarray         # (T,)
    valid: np.ndarray            # (T,)

    @property
    def length(self) -> int:
        return int(self.valid.sum())


@dataclass
class Batch:
    hidden0: np.ndarray          # (B, n, H)
    observations: np.ndarray     # (B, T+1, n, O)
    sent: np.ndarray
    delivered: np.ndarray
    ages: np.ndarray
    actions: np.ndarray          # (B, T, n)
    rewards: np.ndarray          # (B, T)
    terminal: np.ndarray
    valid: np.ndarray

    @property
    def size(self) -> int:
        return self.actions.shape[0]

    @property
    def steps(self) -> int:
        return self.actions.shape[1]


def segment_episode(transitions: List[Transition], length: int) -> List[Segment]:
    """
    Нарезка эпизода на сегменты по length шагов. Последний шаг эпизода -
    терминальный; сегменты не пересекают границу эпизода.
    """
    if length <= 0:
        raise ContractViolation("длина сегмента должна быть положительной")
    L = len(transitions)
    if L == 0:
        return []
    first = transitions[0]
    n, O = first.observations.shape
    H = first.hidden.shape[1]
    M, P = first.delivered.shape
    segments = []
    for start in range(0, L, length):
        chunk = transitions[start:start + length]
        seg = Segment(
            hidden0=chunk[0].hidden.copy(),
            observations=np.zeros((length + 1, n, O)),
            sent=np.zeros((length + 1, n, first.sent.shape[1])),
            delivered=np.zeros((length + 1, M, P)),
            ages=np.zeros((length + 1, M), dtype=np.int64),
            actions=np.zeros((length, n), dtype=np.int64),
            rewards=np.zeros(length),
            terminal=np.zeros(length),
            valid=np.zeros(length),
        )
        for t, tr in enumerate(chunk):
            seg.observations[t] = tr.observations
            seg.sent[t] = tr.sent
            seg.delivered[t] = tr.delivered
            seg.ages[t] = tr.ages
            seg.actions[t] = tr.actions
            seg.rewards[t] = tr.reward
            seg.valid[t] = 1.0
        last = len(chunk) - 1
        seg.observations[last + 1] = chunk[last].next_observations
        end = start + len(chunk)
        if end < L:
            nxt = transitions[end]
            seg.sent[last + 1] = nxt.sent
            seg.delivered[last + 1] = nxt.delivered
            seg.ages[last + 1] = nxt.ages
        else:
            seg.terminal[last] = 1.0
        segments.append(seg)
    return segments


class ReplayBuffer:
    """Кольцо сегментов; ёмкость и прогрев считаются в переходах (шагах среды)."""

    def __init__(self, capacity: int, warmup: int):
        self.capacity = capacity
        self.warmup = warmup
        self.segments: Deque[Segment] = deque()
        self.transitions = 0

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def ready(self) -> bool:
        return self.transitions >= self.warmup

    def add_episode(self, transitions: List[Transition], length: int) -> None:
        for seg in segment_episode(transitions, length):
            self.segments.append(seg)
            self.transitions += seg.length
        while self.transitions > self.capacity and len(self.segments) > 1:
            self.transitions -= self.segments.popleft().length

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if not self.ready:
            raise ContractViolation(f"выборка до прогрева: {self.transitions} < {self.warmup}")
        idx = rng.integers(0, len(self.segments), size=batch_size)
        chosen = [self.segments[int(i)] for i in idx]
        return Batch(**{f.name: np.stack([getattr(s, f.name) for s in chosen]) for f in fields(Segment)})
