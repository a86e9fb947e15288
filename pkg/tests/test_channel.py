import numpy as np
import pytest

from comix.agent import Message
from comix.channel import (Channel, burst_rates, delay_factors, delay_scale, noisy_messages,
                           noisy_payloads)
from comix.config import ChannelConfig
from comix.errors import ContractViolation


def _channel(usage, n=4, seed=0, **kw):
    return Channel(ChannelConfig(usage=usage, **kw), n, np.random.default_rng(seed))


def test_full_usage_is_identity(rng):
    ch = _channel(1.0)
    for t in range(20):
        sent = rng.normal(size=(4, 9))
        delivered, ages = ch.broadcast_payloads(sent, t)
        np.testing.assert_array_equal(delivered, sent)
        assert not ages.any()


def test_zero_usage_keeps_first_step(rng):
    ch = _channel(0.0)
    first = rng.normal(size=(4, 9))
    ch.broadcast_payloads(first, 0)
    for t in range(1, 10):
        delivered, ages = ch.broadcast_payloads(rng.normal(size=(4, 9)), t)
        np.testing.assert_array_equal(delivered, first)
        assert ages.tolist() == [t] * 4


@pytest.mark.parametrize("usage", [0.5, 0.25, 0.10])
def test_delivery_rate_matches_usage(usage):
    ch = _channel(usage, seed=7)
    payload = np.zeros((4, 2))
    for t in range(100_000):
        ch.broadcast_payloads(payload, t)
    assert abs(ch.delivery_rate - usage) < 0.01


def test_burst_rates():
    p_drop, p_recover = burst_rates(0.5, 4.0)
    assert p_recover == 0.25 and p_drop == 0.25
    p_drop, p_recover = burst_rates(0.1, 4.0)
    assert p_drop == 1.0
    assert p_recover / (p_drop + p_recover) == pytest.approx(0.1)
    assert burst_rates(1.0, 4.0) == (0.0, 1.0)


def test_broadcast_never_alters_content(rng):
    ch = _channel(0.3, n=3, log_events=True)
    history = {}
    for t in range(50):
        msgs = [Message.intent(j, rng.normal(size=4), int(rng.integers(5))) for j in range(3)]
        for m in msgs:
            history[(m.sender, t)] = m.payload
        out = ch.broadcast(msgs, t)
        assert [m.sender for m in out] == [0, 1, 2]
        for m in out:
            np.testing.assert_array_equal(m.payload, history[(m.sender, t - m.age)])
    events = ch.drain_events()
    assert len(events) == 150 and ch.drain_events() == []


def test_broadcast_requires_every_sender(rng):
    ch = _channel(1.0, n=3)
    with pytest.raises(ContractViolation):
        ch.broadcast([Message.intent(0, np.zeros(4), 0)], 0)


def test_channel_determinism(rng):
    payloads = rng.normal(size=(30, 4, 3))
    runs = []
    for _ in range(2):
        ch = _channel(0.25, seed=3)
        runs.append([ch.broadcast_payloads(p, t)[1].tolist() for t, p in enumerate(payloads)])
    assert runs[0] == runs[1]


def test_delay_scaling():
    np.testing.assert_allclose(delay_factors(np.array([0, 1, 3])), [1.0, 0.5, 0.25])
    assert np.all(np.diff(delay_factors(np.arange(10))) < 0)
    np.testing.assert_allclose(delay_factors(np.array([2]), "exponential", 0.9), [0.81])
    np.testing.assert_allclose(delay_scale(np.ones((2, 3)), np.array([0, 1])), [[1, 1, 1], [0.5, 0.5, 0.5]])
    with pytest.raises(ContractViolation):
        delay_factors(np.array([-1]))


def test_noisy_agents(rng):
    assert noisy_payloads(0, 9, rng).shape == (0, 9)
    bits = noisy_payloads(4, 9, rng)
    assert set(np.unique(bits)) <= {0.0, 1.0}
    msgs = noisy_messages(2, 9, rng, first_sender=4)
    assert [m.sender for m in msgs] == [4, 5]
    assert all(m.payload.shape == (9,) for m in msgs)
