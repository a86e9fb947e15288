import numpy as np
import pytest

from comix.errors import ContractViolation
from comix.rollout import run_episode
from comix.trainer.replay import ReplayBuffer, Transition, segment_episode


def _transitions(rng, steps, n=2, obs=3, hidden=4, senders=3, payload=8):
    return [Transition(
        observations=rng.normal(size=(n, obs)), hidden=rng.normal(size=(n, hidden)),
        sent=rng.normal(size=(n, payload)), delivered=rng.normal(size=(senders, payload)),
        ages=rng.integers(0, 3, size=senders), actions=rng.integers(0, 5, size=n),
        reward=float(t), next_observations=rng.normal(size=(n, obs)),
    ) for t in range(steps)]


def test_segments_cover_episode(rng):
    trs = _transitions(rng, 5)
    segs = segment_episode(trs, 2)
    assert [s.length for s in segs] == [2, 2, 1]
    np.testing.assert_array_equal(segs[1].hidden0, trs[2].hidden)
    np.testing.assert_array_equal(segs[1].observations[2], trs[3].next_observations)
    np.testing.assert_array_equal(segs[0].delivered[2], trs[2].delivered)
    assert segs[0].terminal.tolist() == [0.0, 0.0]
    assert segs[2].terminal.tolist() == [1.0, 0.0]
    assert segs[2].valid.tolist() == [1.0, 0.0]
    assert segs[2].rewards.tolist() == [4.0, 0.0]


def test_buffer_counts_transitions(rng):
    buf = ReplayBuffer(capacity=10, warmup=6)
    buf.add_episode(_transitions(rng, 4), 2)
    assert not buf.ready
    with pytest.raises(ContractViolation):
        buf.sample(2, rng)
    buf.add_episode(_transitions(rng, 4), 2)
    assert buf.ready and buf.transitions == 8
    buf.add_episode(_transitions(rng, 4), 2)
    assert buf.transitions <= 10
    batch = buf.sample(3, rng)
    assert batch.size == 3 and batch.steps == 2
    assert batch.observations.shape == (3, 3, 2, 3)
    assert batch.delivered.shape == (3, 3, 3, 8)


def test_stored_hidden_reproduces_acting_time_values(tiny_experiment):
    exp = tiny_experiment("switch")
    summary = run_episode(exp, 0.5, train=True, episode=0)
    trs = summary.transitions
    agent = exp.learner.agent
    for k, seg in enumerate(segment_episode(trs, 3)):
        h = seg.hidden0
        for t in range(seg.length):
            _, h_next = agent.q_self(seg.observations[t], h)
            h = h_next.data
            step = 3 * k + t
            if step + 1 < len(trs):
                np.testing.assert_allclose(h, trs[step + 1].hidden, atol=1e-10)
    last = exp.learner.recent[-1]
    q, _ = agent.q_self(trs[-1].observations, trs[-1].hidden)
    np.testing.assert_allclose(q.data, last.q_self, atol=1e-10)
