# comix/coordinator.py: маска координации над входящими сообщениями
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .agent import Message
from .errors import ContractViolation
from .nn import MLP, BiGRU, LayerNorm, Module, Tensor, stack

ACCEPT_THRESHOLD = 0.5


@dataclass
class PairSequence:
    """z_i: пары <m_i, m_j> по возрастанию j, без собственной пары."""
    owner: int
    senders: List[int]
    pairs: np.ndarray          # (K, 2P)

    def __len__(self) -> int:
        return len(self.senders)


@dataclass
class CoordinationMask:
    senders: List[int]
    accept: np.ndarray         # (K,) вероятности принятия

    @property
    def hard(self) -> np.ndarray:
        return self.accept >= ACCEPT_THRESHOLD

    def __len__(self) -> int:
        return len(self.senders)


class Coordinator(Module):
    """BiGRU(2P → 2H) → layer-norm → MLP 2H → H (ReLU) → 2 логита (reject, accept) → softmax."""

    def __init__(self, payload_width: int, rng: np.random.Generator, hidden: int = 128):
        super().__init__()
        self.payload_width = payload_width
        self.hidden = hidden
        self.bigru = self.add_module("bigru", BiGRU(2 * payload_width, hidden, rng))
        self.norm = self.add_module("norm", LayerNorm(2 * hidden))
        self.mlp = self.add_module("mlp", MLP([2 * hidden, hidden, 2], ["relu", "none"], rng))

    def accept_probs(self, pairs) -> Tensor:
        """pairs (B, K, 2P) → вероятности принятия (B, K); K == 0 → пустая маска."""
        data = pairs.data if isinstance(pairs, Tensor) else np.asarray(pairs, dtype=np.float64)
        B, K = data.shape[0], data.shape[1]
        if K == 0:
            return Tensor(np.zeros((B, 0)))
        seq = [Tensor(data[:, k, :]) for k in range(K)]
        ctx = stack(self.bigru(seq), axis=1)                    # (B, K, 2H)
        logits = self.mlp(self.norm(ctx))                       # (B, K, 2)
        return logits.softmax(axis=-1)[..., 1]


# ---------- Пары ----------

def peer_index(n_agents: int, n_senders: int) -> np.ndarray:
    """(n, M-1): для агента i все отправители j ≠ i по возрастанию."""
    return np.array([[j for j in range(n_senders) if j != i] for i in range(n_agents)],
                    dtype=np.int64).reshape(n_agents, max(n_senders - 1, 0))


def pair_batch(sent: np.ndarray, delivered: np.ndarray) -> np.ndarray:
    """
    sent (…, n, P) - собственные свежие сообщения агентов; delivered (…, M, P) -
    то, что пришло по каналу от всех M отправителей. → (…, n, M-1, 2P).
    """
    n, M = sent.shape[-2], delivered.shape[-2]
    peers = peer_index(n, M)
    incoming = delivered[..., peers, :]                               # (…, n, M-1, P)
    own = np.broadcast_to(sent[..., :, None, :], incoming.shape)
    return np.concatenate([own, incoming], axis=-1)


def build_pairs(own: Message, messages: Sequence[Message]) -> PairSequence:
    if all(m.sender != own.sender for m in messages):
        raise ContractViolation(f"собственного сообщения агента {own.sender} нет в рассылке")
    peers = sorted((m for m in messages if m.sender != own.sender), key=lambda m: m.sender)
    width = 2 * len(own.payload)
    if not peers:
        return PairSequence(own.sender, [], np.zeros((0, width)))
    pairs = np.stack([np.concatenate([own.payload, m.payload]) for m in peers])
    return PairSequence(own.sender, [m.sender for m in peers], pairs)


def coordinate(coordinator: Coordinator, pairs: PairSequence) -> CoordinationMask:
    if len(pairs) == 0:
        return CoordinationMask([], np.zeros(0))
    probs = coordinator.accept_probs(pairs.pairs[None])
    return CoordinationMask(list(pairs.senders), probs.data[0].copy())


def filter_messages(messages: Sequence[Message], mask: CoordinationMask) -> List[Message]:
    """Путь исполнения: ровно те сообщения, чей жёсткий бит равен 1 (содержимое не меняется)."""
    peers = sorted(messages, key=lambda m: m.sender)
    if [m.sender for m in peers] != list(mask.senders):
        raise ContractViolation(
            f"маска {list(mask.senders)} не соответствует отправителям {[m.sender for m in peers]}")
    return [m for m, keep in zip(peers, mask.hard) if keep]


def mask_weights(accept: np.ndarray, soft: bool = False) -> np.ndarray:
    """Веса фильтра для пакетного пути: жёсткие биты или мягкие вероятности."""
    accept = np.asarray(accept, dtype=np.float64)
    return accept.copy() if soft else (accept >= ACCEPT_THRESHOLD).astype(np.float64)


def accepted_fraction(hard: np.ndarray, n_real: int) -> float:
    """Доля принятых сообщений, нормированная на число настоящих агентов."""
    hard = np.asarray(hard)
    if hard.size == 0 or n_real <= 0:
        return 0.0
    per_agent = hard.reshape(-1, hard.shape[-1]).sum(axis=-1) if hard.ndim > 1 else hard.sum(keepdims=True)
    return float(np.mean(per_agent) / n_real)
