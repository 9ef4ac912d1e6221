"""Command line entry point: ``wildfire-marl {train,eval,replay,plot}``."""
import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from .harness import ExperimentConfig, evaluate, format_stat, replay, train
from .learner import TrainingAborted
from .scenario import ConfigurationError

logger = logging.getLogger("wildfire_marl")


def _seed(text):
    return text if text == "inf" else int(text)


def _difficulty(text):
    return text if text == "curriculum" else int(text)


def _add_common(p):
    p.add_argument("--config", help="YAML file mirroring ExperimentConfig")
    p.add_argument("--setup", choices=["greedy", "single_agent", "multi_agent", "multi_agent_ac"])
    p.add_argument("--seed", type=_seed, help="scenario seed or 'inf' for a fresh scenario per episode")
    p.add_argument("--difficulty", type=_difficulty, help="1-10 or 'curriculum'")
    p.add_argument("--total-steps", type=int, dest="total_steps")
    p.add_argument("--episodes", type=int, dest="eval_episodes")
    p.add_argument("--out")
    p.add_argument("--master-seed", type=int, dest="master_seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="wildfire-marl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("train", help="train a policy"))

    p = sub.add_parser("eval", help="evaluate a checkpoint or the greedy baseline")
    _add_common(p)
    p.add_argument("--checkpoint", default="greedy", help="checkpoint path or 'greedy'")
    p.add_argument("--modes", default="fixed,random", help="comma list of fixed,random")

    p = sub.add_parser("replay", help="re-run one episode and dump its step log")
    _add_common(p)
    p.add_argument("--checkpoint", default="greedy")
    p.add_argument("--fire-seed", type=int, default=0, dest="fire_seed")

    p = sub.add_parser("plot", help="SVG charts from a run directory")
    p.add_argument("--out", required=True, help="run directory holding the metrics CSVs")
    return parser


def _config(args):
    overrides = {k: getattr(args, k, None) for k in
                 ("setup", "seed", "difficulty", "total_steps", "eval_episodes", "out", "master_seed")}
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _cmd_train(args):
    config = _config(args)

    def progress(step, metrics):
        logger.info("step %d episode %d reward %.1f", step, metrics.episode, metrics.reward)

    _, summary = train(config, progress=progress)
    print(json.dumps(summary, indent=2))


def _cmd_eval(args):
    config = _config(args)
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    bad = set(modes) - {"fixed", "random"}
    if bad:
        raise ConfigurationError(f"unknown eval modes {sorted(bad)}")
    Path(config.out).mkdir(parents=True, exist_ok=True)
    results = evaluate(args.checkpoint, config, modes=modes,
                       episodes_out=Path(config.out) / "eval_episodes.csv")
    (Path(config.out) / "eval_summary.json").write_text(json.dumps(results, indent=2) + "\n")
    for mode, r in results.items():
        print(f"{mode}: reward {format_stat(r['reward_mean'], r['reward_std'])} "
              f"performance {format_stat(r['performance_mean'], r['performance_std'], 3)} "
              f"over {r['episodes']} episodes")


def _cmd_replay(args):
    config = _config(args)
    metrics, log = replay(args.checkpoint, config, fire_seed=args.fire_seed)
    Path(config.out).mkdir(parents=True, exist_ok=True)
    path = Path(config.out) / "replay_steps.jsonl"
    with open(path, "w") as fh:
        for record in log:
            fh.write(json.dumps(record) + "\n")
    print(json.dumps(metrics.row(), indent=2))
    print(f"step log: {path}")


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _cmd_plot(args):
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    run = Path(args.out)
    episodes = _read_csv(run / "episodes.csv")
    summary = _read_csv(run / "training_log.csv") if (run / "training_log.csv").exists() else []
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    rows = [r for r in summary if not math.isnan(float(r["mean_reward"]))]
    ax.plot([int(r["step"]) for r in rows], [float(r["mean_reward"]) for r in rows], marker="o")
    ax.set_xlabel("step")
    ax.set_ylabel("mean cumulative reward")
    ax.set_title("Reward vs step")
    fig.tight_layout()
    fig.savefig(run / "reward_vs_step.svg")
    plt.close(fig)
    written.append(run / "reward_vs_step.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([int(r["episode"]) for r in episodes], [float(r["mean_performance"]) for r in episodes])
    ax.set_xlabel("episode")
    ax.set_ylabel("mean performance")
    ax.set_title("Performance vs episode")
    fig.tight_layout()
    fig.savefig(run / "performance_vs_episode.svg")
    plt.close(fig)
    written.append(run / "performance_vs_episode.svg")

    for path in written:
        print(path)


COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "replay": _cmd_replay, "plot": _cmd_plot}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ConfigurationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
