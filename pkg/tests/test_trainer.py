import json

import numpy as np
import pytest

from comix import create_experiment
from comix.config import ChannelConfig
from comix.evaluation import comm_analysis, disrupt, evaluate, format_table, smooth_ema, smooth_rolling
from comix.finetune import finetune
from comix.logs import RecordWriter
from comix.trainer.loop import Trainer

from conftest import tiny_config


def test_zero_learning_rates_freeze_parameters(tiny_experiment, tmp_path):
    exp = tiny_experiment(lr_q=0.0, lr_coord=0.0, weight_decay=1e-3)
    before = exp.learner.digests()
    Trainer(exp, tmp_path / "run").run(3)
    assert exp.learner.q_updates > 0
    assert exp.learner.digests() == before


def test_trainer_writes_metrics_and_checkpoint(tiny_experiment, tmp_path):
    exp = tiny_experiment()
    with RecordWriter(tmp_path / "metrics.ndjson") as metrics:
        path = Trainer(exp, tmp_path / "run", metrics).run(3)
    assert path.name == "final.ckpt" and path.exists()
    lines = [json.loads(line) for line in (tmp_path / "metrics.ndjson").read_text().splitlines()]
    assert [r["episode"] for r in lines] == [0, 1, 2]
    assert lines[0]["epsilon"] == 1.0
    assert all(len(r["agent_returns"]) == 4 for r in lines)
    assert "wall_clock" not in lines[0]


def test_training_is_reproducible(tmp_path):
    def run(sub):
        exp = create_experiment(tiny_config(tmp_path=tmp_path / sub), seed=3)
        with RecordWriter(tmp_path / sub / "metrics.ndjson") as metrics:
            Trainer(exp, tmp_path / sub, metrics).run(3)
        return (tmp_path / sub / "metrics.ndjson").read_bytes(), exp.learner.digests()

    assert run("a") == run("b")


def test_epsilon_override(tiny_experiment, tmp_path):
    trainer = Trainer(tiny_experiment(), tmp_path, epsilon_override=0.05)
    assert trainer.epsilon(0, 100) == 0.05


# ---------- Оценка ----------

def test_evaluate_is_greedy_and_repeatable(tiny_experiment):
    exp = tiny_experiment(kind="predator_prey", n_agents=4)
    digests = exp.learner.digests()
    a = evaluate(exp, 2)
    b = evaluate(exp, 2)
    assert a.values == b.values
    assert a.metric == "prey_captured"
    assert a.delivery_rate == 1.0
    assert exp.learner.digests() == digests


def test_evaluate_restores_delay_settings(tiny_experiment):
    exp = tiny_experiment()
    evaluate(exp, 1, ChannelConfig(usage=0.5, delay_scaling=True))
    assert exp.learner.delay_scaling is False


def test_disrupt_one_row_per_usage(tiny_experiment):
    rows = disrupt(tiny_experiment(), 1, [1.0, 0.5, 0.0])
    assert [r["usage"] for r in rows] == [1.0, 0.5, 0.0]
    assert rows[0]["delivery_rate"] == 1.0
    assert rows[2]["delivery_rate"] < 0.1


def test_comm_analysis_with_noisy_agents(tiny_experiment, tmp_path):
    exp = tiny_experiment()
    with RecordWriter(tmp_path / "masks.ndjson") as w:
        rows = comm_analysis(exp, 1, [0, 2], mask_writer=w)
    assert [r["noisy_agents"] for r in rows] == [0, 2]
    for r in rows:
        assert 0.0 <= r["accepted_fraction"] <= (3 + r["noisy_agents"]) / 4
    first = json.loads((tmp_path / "masks.ndjson").read_text().splitlines()[0])
    assert len(first["peers"]) == 3


def test_smooth_rolling():
    mean, lo, hi = smooth_rolling([1.0, 2.0, 3.0], window=2)
    np.testing.assert_allclose(mean, [1.0, 1.5, 2.5])
    np.testing.assert_allclose(lo, [1.0, 1.0, 2.0])
    np.testing.assert_allclose(hi, [1.0, 2.0, 3.0])


def test_smooth_ema():
    np.testing.assert_allclose(smooth_ema([2.0, 4.0, 4.0], alpha=0.5), [2.0, 3.0, 3.5])


def test_format_table():
    text = format_table([{"usage": 0.5, "n": 3}], ["usage", "n"])
    header, sep, row = text.splitlines()
    assert header.split() == ["usage", "n"]
    assert set(sep.replace(" ", "")) == {"-"}
    assert row.split() == ["0.5000", "3"]


# ---------- Дообучение ----------

@pytest.fixture
def finetune_experiment(tmp_path):
    cfg = tiny_config(tmp_path=tmp_path)
    cfg.finetune.episodes = 2
    cfg.finetune.eval_every = 1
    cfg.finetune.eval_episodes = 1
    return create_experiment(cfg, seed=0)


def test_finetune_keeps_coordinator(finetune_experiment, tmp_path):
    exp = finetune_experiment
    report = finetune(exp, ChannelConfig(usage=0.5), tmp_path / "ft")
    assert report.coordinator_digest_before == report.coordinator_digest_after
    assert report.episodes <= 2
    assert report.lr_q == pytest.approx(exp.config.train.lr_q / 100.0)
    assert report.after >= report.before
    assert (tmp_path / "ft" / "finetuned.ckpt").exists()


def test_finetune_writes_metrics(finetune_experiment, tmp_path):
    with RecordWriter(tmp_path / "ft.ndjson") as metrics:
        report = finetune(finetune_experiment, ChannelConfig(usage=0.0), tmp_path / "ft", metrics)
    lines = (tmp_path / "ft.ndjson").read_text().splitlines()
    assert len(lines) == report.episodes
    for line in lines:
        assert json.loads(line)["epsilon"] == finetune_experiment.config.train.epsilon_end


def test_untrained_predators_rarely_capture(tiny_experiment):
    s = evaluate(tiny_experiment(kind="predator_prey", n_agents=4), 2)
    assert s.mean <= 2.0
