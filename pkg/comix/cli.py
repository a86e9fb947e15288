# comix/cli.py: подкоманды train | eval | disrupt | comm-analysis | finetune
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from . import Experiment, create_experiment
from .channel import USAGE_SWEEP
from .config import Config, ExperimentConfig, describe_validation_error, dump_config, load_config
from .errors import ComixError, ConfigError
from .evaluation import comm_analysis, disrupt, evaluate, format_table
from .finetune import finetune
from .logs import RecordWriter, setup_logging
from .nn import checkpoint as ckpt_io
from .trainer.loop import Trainer

log = logging.getLogger("comix.cli")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="comix", description="Decentralized MARL with coordinated communication")
    p.add_argument("--output-dir", default=None, help="Output directory (default: config output_dir)")
    p.add_argument("--log-level", default=None, help="Log level (default: COMIX_LOG_LEVEL or INFO)")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="Train from a config file")
    t.add_argument("-c", "--config", default=None, help="YAML config (default: table defaults)")
    t.add_argument("-s", "--seed", type=int, action="append", help="Seed (repeatable; default: config seeds)")
    t.add_argument("--episodes", type=int, default=None, help="Episode budget override")
    t.add_argument("--workers", type=int, default=None, help="Parallel seed processes (default: COMIX_WORKERS)")
    t.add_argument("--dump-trajectories", action="store_true", help="Write per-step trajectory records")

    for name, helptext in (("eval", "Greedy evaluation of trained checkpoints"),
                           ("disrupt", "Channel usage sweep"),
                           ("comm-analysis", "Accepted-message fraction with and without noisy agents"),
                           ("finetune", "Fine-tune Q-networks under a faulty channel")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("-k", "--checkpoint", action="append", required=True,
                       help="Checkpoint path (repeatable, one per seed)")
        s.add_argument("-c", "--config", default=None, help="YAML config (default: config stored in checkpoint)")
        s.add_argument("--episodes", type=int, default=None, help="Evaluation episodes per checkpoint")
        if name == "eval":
            s.add_argument("--usage", type=float, default=None, help="Channel usage fraction")
            s.add_argument("--noisy", type=int, default=None, help="Noisy agent count")
            s.add_argument("--dump-trajectories", action="store_true", help="Write per-step trajectory records")
        if name == "disrupt":
            s.add_argument("--usages", type=float, nargs="+", default=list(USAGE_SWEEP), help="Usage fractions")
            s.add_argument("--delay-scaling", action="store_true", help="Scale stale messages by age")
        if name == "comm-analysis":
            s.add_argument("--noisy", type=int, nargs="+", default=[0, 4], help="Noisy agent counts")
        if name == "finetune":
            s.add_argument("--usage", type=float, required=True, help="Channel usage fraction during fine-tuning")
    return p.parse_args(argv)


# ---------- Общие шаги ----------

def _config_for(args: argparse.Namespace, metadata: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    if args.config is None and metadata and "config" in metadata:
        cfg = ExperimentConfig.model_validate(metadata["config"])
    else:
        cfg = load_config(args.config)
    if args.output_dir:
        cfg = cfg.model_copy(update={"output_dir": args.output_dir})
    return cfg


def _load_trained(args: argparse.Namespace, path: str) -> Experiment:
    ckpt = ckpt_io.load(path)
    cfg = _config_for(args, ckpt.metadata)
    exp = create_experiment(cfg, seed=ckpt.metadata.get("seed", cfg.seeds[0]))
    exp.learner.load_checkpoint(ckpt)
    return exp


def _eval_episodes(args: argparse.Namespace, exp: Experiment) -> int:
    return args.episodes or exp.config.finetune.eval_episodes


def _aggregate(values: List[float]) -> Dict[str, float]:
    return {"mean": float(np.mean(values)), "std": float(np.std(values)), "n": len(values)}


# ---------- train ----------

def train_seed(cfg_data: Dict[str, Any], seed: int, episodes: Optional[int], dump: bool) -> str:
    """Один сид от начала до конца; верхнего уровня, чтобы работать в пуле процессов."""
    cfg = ExperimentConfig.model_validate(cfg_data)
    run_dir = Path(cfg.output_dir) / f"{cfg.env.kind}_n{cfg.env.n_agents}_seed{seed}"
    setup_logging(cfg.output_dir)
    dump_config(cfg, run_dir / "config.yaml")
    exp = create_experiment(cfg, seed=seed)
    traj = RecordWriter(run_dir / "trajectories.ndjson") if dump else None
    events = RecordWriter(run_dir / "channel_events.ndjson") if cfg.channel.log_events else None
    with RecordWriter(run_dir / "metrics.ndjson") as metrics:
        try:
            path = Trainer(exp, run_dir, metrics, trajectory_writer=traj, event_writer=events).run(episodes)
        finally:
            for w in (traj, events):
                if w is not None:
                    w.close()
    return str(path)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_for(args)
    seeds = args.seed or cfg.seeds
    workers = args.workers or Config.WORKERS
    data = cfg.model_dump(mode="json")
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(train_seed, [data] * len(seeds), seeds,
                                  [args.episodes] * len(seeds), [args.dump_trajectories] * len(seeds)))
    else:
        paths = [train_seed(data, s, args.episodes, args.dump_trajectories) for s in seeds]
    for s, p in zip(seeds, paths):
        print(f"seed {s}: {p}")
    return EXIT_OK


# ---------- eval / disrupt / comm-analysis / finetune ----------

def cmd_eval(args: argparse.Namespace) -> int:
    rows, means = [], []
    for path in args.checkpoint:
        exp = _load_trained(args, path)
        update: Dict[str, Any] = {}
        if args.usage is not None:
            update["usage"] = args.usage
        if args.noisy is not None:
            update["noisy_agents"] = args.noisy
        out = Path(exp.config.output_dir)
        traj = RecordWriter(out / f"eval_trajectories_seed{exp.seed}.ndjson") if args.dump_trajectories else None
        try:
            s = evaluate(exp, _eval_episodes(args, exp), exp.channel_config.model_copy(update=update),
                         trajectory_writer=traj)
        finally:
            if traj is not None:
                traj.close()
        rows.append({"checkpoint": path, "seed": exp.seed, "metric": s.metric, "mean": s.mean,
                     "std": s.std, "episodes": s.episodes, "accepted_fraction": s.accepted_fraction})
        means.append(s.mean)
    summary = {"checkpoint": "all", "metric": rows[0]["metric"], **_aggregate(means)}
    _report(exp, "eval", rows + [summary],
            ["checkpoint", "seed", "metric", "mean", "std", "episodes", "accepted_fraction"])
    return EXIT_OK


def cmd_disrupt(args: argparse.Namespace) -> int:
    cells: Dict[float, List[float]] = {}
    rows = []
    for path in args.checkpoint:
        exp = _load_trained(args, path)
        for row in disrupt(exp, _eval_episodes(args, exp), args.usages,
                           delay_scaling=True if args.delay_scaling else None):
            rows.append({"seed": exp.seed, **row})
            cells.setdefault(row["usage"], []).append(row["mean"])
    table = [{"usage": u, "metric": rows[0]["metric"], **_aggregate(v)} for u, v in cells.items()]
    _report(exp, "disrupt", table, ["usage", "metric", "mean", "std", "n"], detail=rows)
    return EXIT_OK


def cmd_comm_analysis(args: argparse.Namespace) -> int:
    by_count: Dict[int, List[float]] = {}
    rows = []
    for path in args.checkpoint:
        exp = _load_trained(args, path)
        out = Path(exp.config.output_dir)
        with RecordWriter(out / f"mask_traces_seed{exp.seed}.ndjson") as masks:
            for row in comm_analysis(exp, _eval_episodes(args, exp), args.noisy, mask_writer=masks):
                rows.append({"seed": exp.seed, **row})
                by_count.setdefault(row["noisy_agents"], []).append(row["accepted_fraction"])
    table = [{"noisy_agents": k, **_aggregate(v)} for k, v in by_count.items()]
    _report(exp, "comm_analysis", table, ["noisy_agents", "mean", "std", "n"], detail=rows)
    return EXIT_OK


def cmd_finetune(args: argparse.Namespace) -> int:
    rows = []
    for path in args.checkpoint:
        exp = _load_trained(args, path)
        if args.episodes:
            exp.config.finetune.eval_episodes = args.episodes
        run_dir = Path(exp.config.output_dir) / f"finetune_usage{args.usage:g}_seed{exp.seed}"
        channel = exp.channel_config.model_copy(update={"usage": args.usage})
        with RecordWriter(run_dir / "metrics.ndjson") as metrics:
            report = finetune(exp, channel, run_dir, metrics)
        if report.coordinator_digest_before != report.coordinator_digest_after:
            raise ComixError("координатор изменился при дообучении")
        rows.append({"seed": exp.seed, **report.as_record()})
    _report(exp, "finetune", rows,
            ["seed", "usage", "metric", "baseline", "before", "after", "converged", "episodes"])
    return EXIT_OK


def _report(exp: Experiment, name: str, table: List[Dict], columns: Sequence[str],
            detail: Optional[List[Dict]] = None) -> None:
    out = Path(exp.config.output_dir)
    with RecordWriter(out / f"{name}_report.ndjson") as w:
        for row in detail or []:
            w.write({"kind": "detail", **row})
        for row in table:
            w.write({"kind": "summary", **row})
    text = format_table(table, columns)
    (out / f"{name}_report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "disrupt": cmd_disrupt,
    "comm-analysis": cmd_comm_analysis,
    "finetune": cmd_finetune,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    setup_logging(args.output_dir or Config.OUTPUT_DIR, args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        print("ERROR: invalid config", file=sys.stderr)
        for line in describe_validation_error(e):
            print(f"  {line}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ComixError as e:
        log.exception("command failed", extra={"command": args.command})
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
