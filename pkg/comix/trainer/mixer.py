# comix/trainer/mixer.py: монотонный QMIX-миксер с гиперсетями
from __future__ import annotations

import numpy as np

from ..nn import MLP, Module, Tensor, linear, no_grad

EMBED = 32
HIDDEN = 16
HYPER_HIDDEN = 64


class MixerNet(Module):
    """
    Q_TOT(q, s): q (B, n) → ELU(q·|W1(s)| + b1(s)) → ELU(·|W2(s)| + b2(s)) → ·|W3(s)| + V(s).
    Все матрицы из гиперсетей берутся по модулю, поэтому ∂Q_TOT/∂q_i ≥ 0.
    """

    def __init__(self, n_agents: int, state_width: int, rng: np.random.Generator,
                 embed: int = EMBED, hidden: int = HIDDEN, hyper_hidden: int = HYPER_HIDDEN):
        super().__init__()
        self.n_agents = n_agents
        self.state_width = state_width
        self.embed = embed
        self.hidden = hidden
        self.hyper_w1 = self.add_module(
            "hyper_w1", MLP([state_width, hyper_hidden, n_agents * embed], ["relu", "none"], rng))
        self.hyper_b1 = self.add_module("hyper_b1", linear(state_width, embed, rng))
        self.hyper_w2 = self.add_module(
            "hyper_w2", MLP([state_width, hyper_hidden, embed * hidden], ["relu", "none"], rng))
        self.hyper_b2 = self.add_module("hyper_b2", linear(state_width, hidden, rng))
        self.hyper_w3 = self.add_module(
            "hyper_w3", MLP([state_width, hyper_hidden, hidden], ["relu", "none"], rng))
        self.hyper_b3 = self.add_module("hyper_b3", MLP([state_width, hyper_hidden, 1], ["relu", "none"], rng))

    def first_layer(self, state: Tensor) -> Tensor:
        B = state.shape[0]
        return self.hyper_w1(state).abs().reshape(B, self.n_agents, self.embed)

    def __call__(self, q_chosen, state) -> Tensor:
        q = q_chosen if isinstance(q_chosen, Tensor) else Tensor(q_chosen)
        s = state if isinstance(state, Tensor) else Tensor(state)
        B = q.shape[0]
        w1 = self.first_layer(s)
        b1 = self.hyper_b1(s).reshape(B, 1, self.embed)
        w2 = self.hyper_w2(s).abs().reshape(B, self.embed, self.hidden)
        b2 = self.hyper_b2(s).reshape(B, 1, self.hidden)
        w3 = self.hyper_w3(s).abs().reshape(B, self.hidden, 1)
        b3 = self.hyper_b3(s).reshape(B, 1, 1)
        h1 = (q.reshape(B, 1, self.n_agents) @ w1 + b1).elu()
        h2 = (h1 @ w2 + b2).elu()
        return (h2 @ w3 + b3).reshape(B)


def mix(mixer: MixerNet, q_chosen, state) -> Tensor:
    """Q_TOT по выбранным q_i (B, n) и совместному состоянию (B, S)."""
    return mixer(q_chosen, state)


def mixer_agent_weights(mixer: MixerNet, state) -> np.ndarray:
    """w_i - среднее по 32 скрытым единицам строки i неотрицательной матрицы |W1(s)|."""
    with no_grad():
        s = state if isinstance(state, Tensor) else Tensor(np.atleast_2d(state))
        return mixer.first_layer(s).data.mean(axis=-1)


def check_monotonicity(mixer: MixerNet, draws: int, rng: np.random.Generator,
                       step: float = 1e-5) -> float:
    """Минимальный конечно-разностный наклон ∂Q_TOT/∂q_i по draws случайным (s, q)."""
    if draws <= 0:
        return float("inf")
    n = mixer.n_agents
    states = rng.uniform(-1.0, 1.0, size=(draws, mixer.state_width))
    qs = rng.normal(0.0, 1.0, size=(draws, n))
    worst = float("inf")
    with no_grad():
        for i in range(n):
            bump = np.zeros(n)
            bump[i] = step
            plus = mixer(qs + bump, states).data
            minus = mixer(qs - bump, states).data
            worst = min(worst, float(((plus - minus) / (2.0 * step)).min()))
    return worst
