import numpy as np
import pytest

from comix.agent import (AgentNet, Message, act, act_batch, coord_weights_for, epsilon_schedule,
                         intent_payloads, intention, q_combined)
from comix.errors import ContractViolation
from comix.nn import Tensor


def test_q_combined_hand_example():
    q = q_combined(np.array([2.0, -2.0, 0.0, 1.0, 1.0]), np.full(5, 0.5))
    np.testing.assert_allclose(q.data, [1.0, -1.0, 0.0, 0.5, 0.5])
    np.testing.assert_array_equal(q_combined(np.arange(5.0), np.ones(5)).data, np.arange(5.0))


def test_weighting_can_change_argmax():
    q_self = np.array([1.0, 0.9, 0.0, 0.0, 0.0])
    w = np.array([0.2, 0.9, 0.5, 0.5, 0.5])
    assert intention(q_self) == 0
    assert intention(q_combined(q_self, w)) == 1


def test_intention_tie_break_and_scale():
    assert intention(np.array([0.1, 0.9, 0.2, 0.0, 0.3])) == 1
    assert intention(np.full(5, 0.7)) == 0
    q = np.random.default_rng(0).normal(size=(10, 5))
    np.testing.assert_array_equal(intention(q), intention(q * 3.7))


def test_act_greedy_does_not_touch_rng():
    rng = np.random.default_rng(5)
    state = rng.bit_generator.state
    assert act(np.array([0.0, 0.0, 3.0, 0.0, 0.0]), 0.0, rng) == 2
    assert rng.bit_generator.state == state


def test_act_uniform_at_full_epsilon():
    rng = np.random.default_rng(1)
    draws = 10_000
    counts = np.bincount([act(np.zeros(5), 1.0, rng) for _ in range(draws)], minlength=5)
    sigma = np.sqrt(draws * 0.2 * 0.8)
    assert np.all(np.abs(counts - draws / 5) < 3 * sigma)


def test_act_rejects_bad_epsilon(rng):
    with pytest.raises(ContractViolation):
        act(np.zeros(5), 1.5, rng)
    assert act_batch(np.eye(5)[:3], 0.0, rng).tolist() == [0, 1, 2]


def test_epsilon_schedule():
    assert epsilon_schedule(0, 100) == 1.0
    assert epsilon_schedule(25, 100) == pytest.approx(0.525)
    assert epsilon_schedule(50, 100) == pytest.approx(0.05)
    assert epsilon_schedule(99, 100) == pytest.approx(0.05)


def test_message_contract():
    m = Message.intent(2, np.zeros(4), 3)
    assert m.action == 3
    assert m.payload.shape == (9,)
    assert m.aged(4).age == 4
    with pytest.raises(ContractViolation):
        Message.intent(0, np.zeros(4), 5)
    with pytest.raises(ContractViolation):
        Message(0, np.zeros(4), np.zeros(5), age=-1)
    np.testing.assert_array_equal(intent_payloads(np.zeros((1, 4)), np.array([3]))[0], m.payload)


def test_zero_parameters_zero_q(rng):
    net = AgentNet(4, rng, hidden=6)
    for t in net.parameters().values():
        t.data = np.zeros_like(t.data)
    q, _ = net.q_self(rng.normal(size=(3, 4)), net.initial_hidden(3))
    np.testing.assert_array_equal(q.data, 0.0)


def test_q_self_is_deterministic(rng):
    net = AgentNet(4, rng, hidden=6)
    obs, h = rng.normal(size=(2, 4)), rng.normal(size=(2, 6))
    a, ha = net.q_self(obs, h)
    b, hb = net.q_self(obs, h)
    np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(ha.data, hb.data)


def test_hidden_state_causality(rng):
    net = AgentNet(4, rng, hidden=6)
    seq = rng.normal(size=(6, 1, 4))
    h = net.initial_hidden(1)
    full = []
    for obs in seq:
        q, h = net.q_self(obs, h)
        full.append(q.data)
    h = net.initial_hidden(1)
    for t, obs in enumerate(seq[:3]):
        q, h = net.q_self(obs, h)
        np.testing.assert_array_equal(q.data, full[t])


def test_coord_weights_empty_and_bounds(rng):
    net = AgentNet(4, rng, hidden=6)
    h = Tensor(rng.normal(size=(1, 6)))
    w = coord_weights_for(net, h, [])
    assert w.shape == (1, 5)
    assert np.all((w.data > 0) & (w.data < 1))
    payloads = rng.normal(size=(1000, 2, 9)) * 5
    h_many = Tensor(rng.normal(size=(1000, 6)) * 5)
    w_many = net.coord_weights(h_many, payloads, np.ones((1000, 2))).data
    assert np.all((w_many > 0) & (w_many < 1))


def test_coord_weights_permutation_invariant(rng):
    net = AgentNet(4, rng, hidden=6)
    h = Tensor(rng.normal(size=(6,)))
    msgs = [Message.intent(j, rng.normal(size=4), int(rng.integers(5))) for j in range(4)]
    a = coord_weights_for(net, h, msgs, scale=[1.0, 0.5, 0.25, 1.0])
    b = coord_weights_for(net, h, msgs[::-1], scale=[1.0, 0.25, 0.5, 1.0])
    np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_sign_preserved(rng):
    net = AgentNet(4, rng, hidden=6)
    q_self, h_next = net.q_self(rng.normal(size=(5, 4)), net.initial_hidden(5))
    w = net.coord_weights(h_next, rng.normal(size=(5, 3, 9)), np.ones((5, 3)))
    q = q_combined(q_self, w)
    np.testing.assert_array_equal(np.sign(q.data), np.sign(q_self.data))
