import numpy as np
import pytest

from comix.agent import Message
from comix.coordinator import (CoordinationMask, Coordinator, accepted_fraction, build_pairs,
                               coordinate, filter_messages, mask_weights, pair_batch, peer_index)
from comix.errors import ContractViolation


def _messages(rng, n, obs_width=4):
    return [Message.intent(j, rng.normal(size=obs_width), int(rng.integers(5))) for j in range(n)]


def test_pairs_skip_self_in_order(rng):
    msgs = _messages(rng, 5)
    pairs = build_pairs(msgs[2], msgs[::-1])
    assert pairs.senders == [0, 1, 3, 4]
    assert pairs.pairs.shape == (4, 2 * 9)
    np.testing.assert_array_equal(pairs.pairs[1, 9:], msgs[1].payload)
    np.testing.assert_array_equal(pairs.pairs[3, :9], msgs[2].payload)


def test_single_agent_has_no_peers(rng):
    msgs = _messages(rng, 1)
    pairs = build_pairs(msgs[0], msgs)
    assert len(pairs) == 0
    mask = coordinate(Coordinator(9, rng, hidden=3), pairs)
    assert len(mask) == 0
    assert filter_messages([], mask) == []


def test_missing_own_message(rng):
    msgs = _messages(rng, 3)
    with pytest.raises(ContractViolation):
        build_pairs(msgs[0], msgs[1:])


def test_accept_probabilities(rng):
    coord = Coordinator(9, rng, hidden=3)
    msgs = _messages(rng, 4)
    mask = coordinate(coord, build_pairs(msgs[0], msgs))
    assert mask.senders == [1, 2, 3]
    assert np.all((mask.accept >= 0) & (mask.accept <= 1))
    again = coordinate(coord, build_pairs(msgs[0], msgs))
    np.testing.assert_array_equal(mask.accept, again.accept)


def test_mask_depends_on_context(rng):
    coord = Coordinator(9, rng, hidden=3)
    msgs = _messages(rng, 4)
    before = coordinate(coord, build_pairs(msgs[0], msgs)).accept[0]
    msgs[3] = Message.intent(3, rng.normal(size=4) * 10, 0)
    after = coordinate(coord, build_pairs(msgs[0], msgs)).accept[0]
    assert before != after


def test_filter_is_exact_selection(rng):
    peers = [m for m in _messages(rng, 5) if m.sender != 0]
    mask = CoordinationMask([1, 2, 3, 4], np.array([0.9, 0.1, 0.5, 0.2]))
    kept = filter_messages(peers, mask)
    assert [m.sender for m in kept] == [1, 3]
    assert kept[0] is peers[0]
    everything = CoordinationMask([1, 2, 3, 4], np.ones(4))
    assert filter_messages(peers, everything) == peers
    assert filter_messages(peers, CoordinationMask([1, 2, 3, 4], np.zeros(4))) == []
    with pytest.raises(ContractViolation):
        filter_messages(peers[:3], mask)


def test_pair_batch_matches_build_pairs(rng):
    msgs = _messages(rng, 4)
    sent = np.stack([m.payload for m in msgs])
    noisy = rng.integers(0, 2, size=(2, 9)).astype(float)
    delivered = np.concatenate([sent, noisy])
    batch = pair_batch(sent, delivered)
    assert batch.shape == (4, 5, 18)
    assert peer_index(4, 6)[2].tolist() == [0, 1, 3, 4, 5]
    np.testing.assert_array_equal(batch[0, :3], build_pairs(msgs[0], msgs).pairs)
    np.testing.assert_array_equal(batch[1, 4, 9:], noisy[1])


def test_mask_helpers():
    probs = np.array([[0.2, 0.7], [0.5, 0.4]])
    np.testing.assert_array_equal(mask_weights(probs), [[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(mask_weights(probs, soft=True), probs)
    assert accepted_fraction(mask_weights(probs), 2) == pytest.approx(0.5)
    assert accepted_fraction(np.zeros((0,)), 4) == 0.0
