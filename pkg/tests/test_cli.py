import json

import pytest

from comix.cli import main, parse_args
from comix.logs import read_records

from conftest import TINY_TRAIN

CONFIG = {
    "env": {"kind": "switch"},
    "train": TINY_TRAIN,
    "finetune": {"episodes": 2, "eval_every": 1, "eval_episodes": 1},
    "seeds": [0],
}


@pytest.fixture
def trained(tmp_path, write_config):
    cfg = write_config(CONFIG)
    out = tmp_path / "out"
    assert main(["--output-dir", str(out), "train", "-c", str(cfg), "--seed", "0", "--episodes", "3"]) == 0
    return out, out / "switch_n4_seed0" / "final.ckpt"


def test_parse_defaults():
    args = parse_args(["disrupt", "-k", "a.ckpt", "-k", "b.ckpt"])
    assert args.checkpoint == ["a.ckpt", "b.ckpt"]
    assert args.usages == [1.0, 0.5, 0.25, 0.10, 0.0]
    assert parse_args(["comm-analysis", "-k", "a.ckpt"]).noisy == [0, 4]
    with pytest.raises(SystemExit):
        parse_args(["finetune", "-k", "a.ckpt"])


def test_train_outputs(trained):
    out, ckpt = trained
    assert ckpt.exists()
    run_dir = ckpt.parent
    assert len((run_dir / "metrics.ndjson").read_text().splitlines()) == 3
    assert (run_dir / "config.yaml").exists()
    assert (out / "comix.ndjson").exists()


def test_train_is_byte_reproducible(tmp_path, write_config):
    cfg = str(write_config(CONFIG))
    for sub in ("a", "b"):
        assert main(["--output-dir", str(tmp_path / sub), "train", "-c", cfg, "--episodes", "3"]) == 0
    a = (tmp_path / "a" / "switch_n4_seed0" / "metrics.ndjson").read_bytes()
    b = (tmp_path / "b" / "switch_n4_seed0" / "metrics.ndjson").read_bytes()
    assert a == b


def test_eval_report(trained, capsys):
    out, ckpt = trained
    assert main(["--output-dir", str(out), "eval", "-k", str(ckpt), "--episodes", "2", "--usage", "0.5"]) == 0
    rows = [json.loads(line) for line in (out / "eval_report.ndjson").read_text().splitlines()]
    assert rows[0]["metric"] == "normalized_reward"
    assert rows[-1]["checkpoint"] == "all" and rows[-1]["n"] == 1
    assert "normalized_reward" in capsys.readouterr().out


def test_disrupt_report(trained):
    out, ckpt = trained
    assert main(["--output-dir", str(out), "disrupt", "-k", str(ckpt), "--episodes", "1",
                 "--usages", "1.0", "0.0"]) == 0
    rows = [json.loads(line) for line in (out / "disrupt_report.ndjson").read_text().splitlines()]
    assert [r["usage"] for r in rows if r["kind"] == "summary"] == [1.0, 0.0]
    assert (out / "disrupt_report.txt").exists()


def test_comm_analysis_report(trained):
    out, ckpt = trained
    assert main(["--output-dir", str(out), "comm-analysis", "-k", str(ckpt), "--episodes", "1",
                 "--noisy", "0", "2"]) == 0
    assert (out / "comm_analysis_report.txt").exists()
    assert (out / "mask_traces_seed0.ndjson").exists()


def test_finetune_report(trained):
    out, ckpt = trained
    assert main(["--output-dir", str(out), "finetune", "-k", str(ckpt), "--usage", "0.5"]) == 0
    assert (out / "finetune_usage0.5_seed0" / "finetuned.ckpt").exists()
    rows = read_records(out / "finetune_report.ndjson")
    assert rows[0]["usage"] == 0.5
    assert rows[0]["coordinator_digest_before"] == rows[0]["coordinator_digest_after"]


def test_invalid_config_exit_code(tmp_path, write_config, capsys):
    cfg = write_config({"train": {"learning_rate": 0.1}})
    assert main(["--output-dir", str(tmp_path), "train", "-c", str(cfg)]) == 2
    assert "learning_rate" in capsys.readouterr().err


def test_missing_checkpoint_exit_code(tmp_path):
    assert main(["--output-dir", str(tmp_path), "eval", "-k", str(tmp_path / "nope.ckpt")]) == 1
