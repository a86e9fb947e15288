# comix/rollout.py: децентрализованное исполнение одного эпизода
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import Experiment
from .agent import act_batch, intent_payloads, intention
from .channel import noisy_payloads
from .logs import RecordWriter
from .nn import no_grad
from .trainer.learner import StepRecord
from .trainer.replay import Transition


@dataclass
class EpisodeSummary:
    episode: int
    steps: int
    team_return: float
    agent_returns: List[float]
    headline: float
    accepted_fraction: float
    transitions: List[Transition] = field(default_factory=list, repr=False)


def run_episode(exp: Experiment, epsilon: float, train: bool, episode: int = 0,
                seed: Optional[int] = None,
                on_step: Optional[Callable[[], None]] = None,
                mask_writer: Optional[RecordWriter] = None,
                trajectory_writer: Optional[RecordWriter] = None,
                event_writer: Optional[RecordWriter] = None) -> EpisodeSummary:
    """
    Шаг исполнения: Q_self → намерение → рассылка → маска координатора →
    W_coord → Q_i → ε-жадное действие. При train=True шаги копятся для буфера
    и для контрастного лосса, а on_step() вызывается после каждого шага среды.
    """
    env, learner, channel = exp.env, exp.learner, exp.channel
    agent = learner.agent
    n = env.n_agents
    n_noisy = exp.channel_config.noisy_agents
    _, obs = env.reset(exp.episode_seed(episode) if seed is None else seed)
    channel.reset()
    h = agent.initial_hidden(n)

    transitions: List[Transition] = []
    agent_returns = np.zeros(n)
    accepted: List[float] = []
    t = 0
    while True:
        with no_grad():
            q_self, h_next = agent.q_self(obs, h)
            sent = intent_payloads(obs, intention(q_self))
            outgoing = np.concatenate([sent, noisy_payloads(n_noisy, agent.payload_width, exp.noise_rng)])
            if learner.communication:
                delivered, ages = channel.broadcast_payloads(outgoing, t)
            else:
                delivered, ages = outgoing, np.zeros(len(outgoing), dtype=np.int64)
            q, probs = learner.policy_q(agent, q_self, h_next, sent[None], delivered[None], ages[None])
        actions = act_batch(q, epsilon, exp.act_rng)
        result = env.step(actions)

        hard = probs >= 0.5
        if probs.shape[1]:
            accepted.append(float(hard.sum(axis=1).mean()) / n)
        if mask_writer is not None:
            for i in range(n):
                mask_writer.write({"episode": episode, "step": t, "agent": i,
                                   "accepted": int(hard[i].sum()),
                                   "peers": [int(b) for b in hard[i]]})
        events = channel.drain_events()
        if event_writer is not None:
            for ev in events:
                event_writer.write({"episode": episode, **ev})
        if trajectory_writer is not None:
            trajectory_writer.write({"episode": episode, **env.trajectory_record(actions, result)})

        if train:
            transitions.append(Transition(
                observations=obs, hidden=h, sent=sent, delivered=delivered, ages=ages,
                actions=actions, reward=float(result.rewards.sum()),
                next_observations=result.observations,
            ))
            learner.recent.append(StepRecord(
                q_self=q_self.data.copy(), h_next=h_next.data.copy(), sent=sent,
                delivered=delivered, ages=ages, state=env.joint_state(obs),
            ))
        agent_returns += result.rewards
        h = h_next.data
        obs = result.observations
        t += 1
        if train and on_step is not None:
            on_step()
        if result.episode_done:
            break

    team = float(agent_returns.sum())
    return EpisodeSummary(
        episode=episode, steps=t, team_return=team,
        agent_returns=[float(r) for r in agent_returns],
        headline=env.headline(team, env.state),
        accepted_fraction=float(np.mean(accepted)) if accepted else 0.0,
        transitions=transitions,
    )
