import numpy as np
import pytest

from comix.errors import CheckpointError
from comix.nn import checkpoint as ckpt_io
from comix.trainer.learner import Learner

from conftest import tiny_config


def test_save_load_preserves_arrays(tmp_path, rng):
    ckpt = ckpt_io.Checkpoint(
        {"seed": 3, "note": "тест"},
        {"a": {"w": rng.normal(size=(2, 3)), "s": np.array(1.5)}, "b": {}},
    )
    path = ckpt_io.save(tmp_path / "x.ckpt", ckpt)
    loaded = ckpt_io.load(path)
    assert loaded.metadata == ckpt.metadata
    np.testing.assert_array_equal(loaded.sections["a"]["w"], ckpt.sections["a"]["w"])
    assert loaded.sections["a"]["s"].shape == ()
    assert loaded.sections["b"] == {}


def test_bad_magic_and_truncation(tmp_path):
    raw = ckpt_io.dumps(ckpt_io.Checkpoint({}, {"a": {"w": np.ones(4)}}))
    with pytest.raises(CheckpointError):
        ckpt_io.loads(b"NOTCOMIX" + raw[8:])
    with pytest.raises(CheckpointError):
        ckpt_io.loads(raw[:-3])
    with pytest.raises(CheckpointError):
        ckpt_io.load(tmp_path / "missing.ckpt")


def test_learner_round_trip_and_width_mismatch(rng):
    cfg = tiny_config()
    learner = Learner(cfg.env, cfg.train, cfg.channel, rng)
    ckpt = ckpt_io.loads(ckpt_io.dumps(learner.to_checkpoint({"seed": 0})))

    other = Learner(cfg.env, cfg.train, cfg.channel, np.random.default_rng(99))
    other.load_checkpoint(ckpt)
    assert other.digests() == learner.digests()

    wider = tiny_config(hidden=6)
    with pytest.raises(CheckpointError, match="hidden"):
        Learner(wider.env, wider.train, wider.channel, rng).load_checkpoint(ckpt)
