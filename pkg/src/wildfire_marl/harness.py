"""Experiment orchestration: configuration, episodes, training and evaluation."""
import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import policies as P
from .curriculum import DEFAULT_LESSONS, Curriculum, CurriculumState, Lesson
from .dynamics import SpreadRules
from .env import EPISODE_LENGTH, SETUPS, WildfireEnv
from .learner import PPOConfig, PPOTrainer, SegmentCollector, TrainingAborted
from .scenario import ConfigurationError, ScenarioConfig, build_scenario
from .towers import N_TOWERS

logger = logging.getLogger(__name__)

RANDOM_SEED = "inf"
CURRICULUM = "curriculum"
TRAIN_STREAM, EVAL_STREAM, FIRE_STREAM = 1, 2, 3


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run.

    ``seed`` is a scenario seed or ``"inf"`` for a fresh scenario per
    episode; ``difficulty`` is 1-10 or ``"curriculum"``. Steps count agent
    decisions, so one multi-agent environment step is nine steps.
    """

    setup: str = "multi_agent"
    seed: object = None
    difficulty: object = None
    episode_length: int = EPISODE_LENGTH
    total_steps: int = 500_000
    eval_episodes: int = 20
    out: str = "runs/default"
    master_seed: int = 0
    summary_freq: int = 24_300
    keep_checkpoints: int = 5
    help_condition: str = "fire"
    humidity_rule: str = "verbatim"
    ppo: dict = field(default_factory=dict)
    curriculum_thresholds: list = None
    min_lesson_length: int = 100

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ConfigurationError(f"setup must be one of {SETUPS}, got {self.setup!r}")
        ac = self.setup == "multi_agent_ac"
        if self.seed is None:
            self.seed = RANDOM_SEED if ac else 0
        if self.difficulty is None:
            self.difficulty = CURRICULUM if ac else 1
        if ac and (self.seed != RANDOM_SEED or self.difficulty != CURRICULUM):
            raise ConfigurationError("multi_agent_ac requires seed='inf' and difficulty='curriculum'")
        if self.seed != RANDOM_SEED:
            self.seed = int(self.seed)
        if self.difficulty != CURRICULUM:
            self.difficulty = int(self.difficulty)
            ScenarioConfig(seed=0, difficulty=self.difficulty)
        if self.episode_length <= 0 or self.total_steps <= 0 or self.eval_episodes <= 0:
            raise ConfigurationError("episode_length, total_steps and eval_episodes must be positive")
        self.ppo_config()
        if self.difficulty == CURRICULUM:
            self.curriculum()

    @property
    def random_seed(self):
        return self.seed == RANDOM_SEED

    def curriculum(self):
        if self.curriculum_thresholds is None:
            lessons = DEFAULT_LESSONS
        else:
            if len(self.curriculum_thresholds) != len(DEFAULT_LESSONS) - 1:
                raise ConfigurationError("curriculum_thresholds needs one entry per non-final lesson")
            lessons = tuple(Lesson(f"Lesson{i + 1}", value=i + 1, threshold=float(t))
                            for i, t in enumerate(self.curriculum_thresholds))
            lessons += (Lesson(f"Lesson{len(lessons) + 1}", value=len(lessons) + 1),)
        lessons = tuple(dataclasses.replace(l, min_length=self.min_lesson_length) for l in lessons)
        return Curriculum(lessons)

    def ppo_config(self):
        return PPOConfig(**{"max_steps": self.total_steps, **self.ppo})

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path, **overrides):
        data = yaml.safe_load(Path(path).read_text()) or {}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def content_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def derived_seed(master, stream, index):
    """Reproducible 31-bit seed for episode ``index`` of a named stream."""
    return int(np.random.SeedSequence([int(master), int(stream), int(index)]).generate_state(1)[0] >> 1)


@lru_cache(maxsize=8)
def cached_scenario(seed, difficulty):
    return build_scenario(ScenarioConfig(seed=seed, difficulty=difficulty))


def make_env(config, scenario_seed, difficulty, fire_seed):
    scenario = cached_scenario(int(scenario_seed), int(difficulty))
    env_setup = "multi_agent" if config.setup == "multi_agent_ac" else config.setup
    return WildfireEnv(
        scenario,
        setup=env_setup,
        fire_seed=fire_seed,
        rules=SpreadRules(humidity_rule=config.humidity_rule),
        help_condition=config.help_condition,
        episode_length=config.episode_length,
    )


@dataclass
class EpisodeMetrics:
    episode: int
    scenario_seed: int
    difficulty: int
    reward: float
    agent_rewards: list
    mean_performance: float
    mean_collective_performance: float
    fire_count: float
    burned_final: int
    help_count: int
    help_request_count: int
    mean_resource: float
    tower_performance: list
    rejected_actions: int
    steps: int

    def row(self):
        out = {k: v for k, v in dataclasses.asdict(self).items() if k not in ("agent_rewards", "tower_performance")}
        for i, r in enumerate(self.agent_rewards):
            out[f"reward_agent_{i}"] = r
        for i, p in enumerate(self.tower_performance):
            out[f"performance_tower_{i}"] = p
        return {k: (repr(float(v)) if isinstance(v, float) else v) for k, v in out.items()}


METRIC_COLUMNS = (
    ["episode", "scenario_seed", "difficulty", "reward", "mean_performance", "mean_collective_performance",
     "fire_count", "burned_final", "help_count", "help_request_count", "mean_resource", "rejected_actions", "steps"]
    + [f"reward_agent_{i}" for i in range(N_TOWERS)]
    + [f"performance_tower_{i}" for i in range(N_TOWERS)]
)


class GreedyPolicy:
    def __call__(self, env, obs):
        return env.greedy_actions(), None, None


class NetworkPolicy:
    """Samples from a trained network with its own seeded stream."""

    def __init__(self, network, seed=0):
        self.network = network
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE7A1]))

    def __call__(self, env, obs):
        actions, logp, values = self.network.act(obs, self.rng)
        return actions, logp, values


def _env_actions(env, actions):
    actions = np.asarray(actions)
    return actions.reshape(N_TOWERS)


def run_episode(env, policy, episode=0, on_step=None, step_log=None):
    """Play one full episode and summarise it.

    ``on_step(obs, actions, logp, values, rewards, next_obs, done)`` sees
    every transition; ``step_log`` (a list) receives one dict per step.
    """
    obs = env.reset()
    n_agents = obs.shape[0]
    totals = np.zeros(n_agents)
    perf_sum = np.zeros(N_TOWERS)
    ego_sum = coll_sum = fire_sum = resource_sum = 0.0
    help_count = help_requests = rejected = 0
    steps = 0
    while not env.done:
        actions, logp, values = policy(env, obs)
        next_obs, rewards, done, info = env.step(_env_actions(env, actions))
        if on_step is not None:
            on_step(obs, actions, logp, values, rewards, next_obs, done)
        totals += rewards
        perf_sum += info.perfs
        ego_sum += float(info.ego_perf.mean())
        coll_sum += info.reward.collective
        fire_sum += info.burning
        resource_sum += float(env.ledger.support.mean()) / 10.0
        help_count += info.help_given
        help_requests += info.help_sent
        rejected += int((~info.accepted).sum())
        steps += 1
        if step_log is not None:
            step_log.append(_step_record(env, info, actions))
        obs = next_obs
    cfg = env.scenario.config
    return EpisodeMetrics(
        episode=episode,
        scenario_seed=int(cfg.seed),
        difficulty=int(cfg.difficulty),
        reward=float(totals.mean()),
        agent_rewards=[float(x) for x in totals],
        mean_performance=ego_sum / steps,
        mean_collective_performance=coll_sum / steps,
        fire_count=fire_sum / steps,
        burned_final=int(len(env.fire.burned)),
        help_count=help_count,
        help_request_count=help_requests,
        mean_resource=resource_sum / steps,
        tower_performance=[float(x) for x in perf_sum / steps],
        rejected_actions=rejected,
        steps=steps,
    )


def _step_record(env, info, actions):
    burning = env.fire.burning
    pos = env.forest.positions[burning]
    frontier = None
    if len(burning):
        frontier = {
            "centroid": pos[:, [0, 2]].mean(axis=0).round(3).tolist(),
            "min": pos[:, [0, 2]].min(axis=0).round(3).tolist(),
            "max": pos[:, [0, 2]].max(axis=0).round(3).tolist(),
        }
    comms = [dataclasses.asdict(r) for r in env.inboxes.log if r.t_sent == info.t and r.kind == "help"]
    return {
        "t": info.t,
        "burning": info.burning,
        "burned": info.burned,
        "frontier": frontier,
        **env.ledger.snapshot(),
        "actions": np.asarray(actions).reshape(-1).tolist(),
        "accepted": info.accepted.tolist(),
        "egoistic": info.reward.egoistic.round(6).tolist(),
        "collective": round(info.reward.collective, 6),
        "bonus": info.reward.bonus.round(6).tolist(),
        "performance": info.perfs.round(6).tolist(),
        "help_requests": comms,
    }


def learner_shape(setup):
    if setup == "single_agent":
        return P.SA_OBS_DIM, P.SA_BRANCHES, False
    return P.MA_OBS_DIM, P.MA_BRANCHES, True


class RunWriter:
    """CSV/JSON outputs of one run directory."""

    def __init__(self, out, config):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "checkpoints").mkdir(exist_ok=True)
        self.config = config
        self._episodes = self._open("episodes.csv", METRIC_COLUMNS)
        self._summary = self._open("training_log.csv", [
            "step", "episodes", "mean_reward", "policy_loss", "value_loss", "entropy", "lesson", "difficulty"])
        self._lessons = self._open("curriculum.csv", [
            "step", "episode", "old_lesson", "new_lesson", "smoothed_reward"])

    def _open(self, name, columns):
        fh = open(self.out / name, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        return fh, writer

    def episode(self, metrics):
        self._episodes[1].writerow(metrics.row())

    def summary(self, row):
        self._summary[1].writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

    def lesson(self, row):
        self._lessons[1].writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

    def manifest(self, graph, extra=None):
        data = {
            "package_version": __version__,
            "config": self.config.to_dict(),
            "config_hash": self.config.content_hash(),
            "neighborhood_graph": {str(k): v for k, v in graph.items()},
        }
        data.update(extra or {})
        (self.out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    def checkpoint(self, trainer, keep):
        path = self.out / "checkpoints" / f"checkpoint_{trainer.step:012d}.pt"
        trainer.save(path)
        existing = sorted((self.out / "checkpoints").glob("checkpoint_*.pt"))
        for old in existing[:-keep]:
            old.unlink()
        return path

    def close(self):
        for fh, _ in (self._episodes, self._summary, self._lessons):
            fh.close()


def train(config, progress=None):
    """Rollout -> buffer -> PPO update until ``total_steps`` agent steps.

    Returns the trainer and a summary dict. Outputs land in ``config.out``.
    """
    if config.setup == "greedy":
        raise ConfigurationError("the greedy baseline has nothing to train")
    started = time.time()
    obs_dim, branches, use_encoder = learner_shape(config.setup)
    trainer = PPOTrainer(obs_dim, branches, config.ppo_config(), use_encoder, seed=config.master_seed)
    curriculum = config.curriculum() if config.difficulty == CURRICULUM else None
    cstate = CurriculumState()
    writer = RunWriter(config.out, config)
    horizon = trainer.config.time_horizon
    next_summary = config.summary_freq
    window_rewards, window_losses = [], []
    last_checkpoint = None
    episode = 0
    graph_written = False
    try:
        while trainer.step < config.total_steps:
            scenario_seed = derived_seed(config.master_seed, TRAIN_STREAM, episode) if config.random_seed else config.seed
            difficulty = curriculum.current_difficulty(cstate) if curriculum else config.difficulty
            env = make_env(config, scenario_seed, difficulty, derived_seed(config.master_seed, FIRE_STREAM, episode))
            if not graph_written:
                writer.manifest(env.graph)
                graph_written = True
            segments = None
            truncated = False

            def on_step(obs, actions, logp, values, rewards, next_obs, done):
                nonlocal segments, next_summary, last_checkpoint, truncated
                if segments is None:
                    segments = [SegmentCollector() for _ in range(obs.shape[0])]
                for a, seg in enumerate(segments):
                    seg.append(obs[a], actions[a], logp[a], values[a], rewards[a], next_obs[a])
                trainer.step += len(segments)
                while next_summary <= min(trainer.step, config.total_steps):
                    writer.summary(_summary_row(next_summary, episode, window_rewards, window_losses,
                                                cstate, difficulty))
                    window_rewards.clear()
                    window_losses.clear()
                    next_summary += config.summary_freq
                for seg in segments:
                    if done:
                        trainer.finish_segment(seg, terminal=True)
                    elif len(seg) >= horizon:
                        trainer.finish_segment(seg, terminal=False)
                if trainer.ready():
                    diag = trainer.update()
                    window_losses.append(diag)
                    last_checkpoint = writer.checkpoint(trainer, config.keep_checkpoints)
                if trainer.step >= config.total_steps and not done:
                    truncated = True
                    raise _BudgetReached

            policy = _TrainerPolicy(trainer)
            try:
                metrics = run_episode(env, policy, episode=episode, on_step=on_step)
            except _BudgetReached:
                for seg in segments:
                    trainer.finish_segment(seg, terminal=False)
                break
            writer.episode(metrics)
            window_rewards.append(metrics.reward)
            if curriculum:
                new_state = curriculum.update(cstate, metrics.reward)
                if new_state.lesson_index != cstate.lesson_index:
                    writer.lesson({"step": trainer.step, "episode": episode, "old_lesson": cstate.lesson_index,
                                   "new_lesson": new_state.lesson_index,
                                   "smoothed_reward": new_state.smoothed_reward})
                cstate = new_state
            episode += 1
            if progress:
                progress(trainer.step, metrics)
        if trainer.ready():
            window_losses.append(trainer.update())
        last_checkpoint = writer.checkpoint(trainer, config.keep_checkpoints)
    except TrainingAborted:
        logger.exception("training aborted; last good checkpoint: %s", last_checkpoint)
        raise
    finally:
        writer.close()
    elapsed = time.time() - started
    (Path(config.out) / "timing.json").write_text(json.dumps({"wall_clock_seconds": elapsed}) + "\n")
    return trainer, {
        "episodes": episode,
        "updates": trainer.updates,
        "steps": trainer.step,
        "checkpoint": str(last_checkpoint),
        "final_lesson": cstate.lesson_index,
        "wall_clock_seconds": elapsed,
    }


class _BudgetReached(Exception):
    pass


class _TrainerPolicy:
    def __init__(self, trainer):
        self.trainer = trainer

    def __call__(self, env, obs):
        return self.trainer.act(obs)


def _summary_row(step, episode, rewards, losses, cstate, difficulty):
    def avg(key):
        return float(np.mean([d[key] for d in losses])) if losses else float("nan")
    return {
        "step": step,
        "episodes": episode,
        "mean_reward": float(np.mean(rewards)) if rewards else float("nan"),
        "policy_loss": avg("policy_loss"),
        "value_loss": avg("value_loss"),
        "entropy": avg("entropy"),
        "lesson": cstate.lesson_index,
        "difficulty": difficulty,
    }


def summarize(values):
    """Mean and sample standard deviation (0 for a single value)."""
    values = np.asarray(values, dtype=np.float64)
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return float(values.mean()), std


def load_policy(checkpoint, seed=0):
    if checkpoint in (None, "greedy"):
        return GreedyPolicy(), "greedy"
    trainer = PPOTrainer.load(checkpoint)
    setup = "single_agent" if not trainer.use_encoder else "multi_agent"
    return NetworkPolicy(trainer.network, seed), setup


def evaluate(checkpoint, config, n_episodes=None, modes=("fixed", "random"), episodes_out=None):
    """Mean +- sample std of episode reward and performance.

    ``fixed`` replays ``config.seed`` (0 when the config is random-seeded);
    ``random`` draws held-out scenarios from a stream disjoint from training.
    Checkpoints are only read.
    """
    n = n_episodes or config.eval_episodes
    difficulty = 1 if config.difficulty == CURRICULUM else config.difficulty
    policy, setup = load_policy(checkpoint, config.master_seed)
    eval_config = dataclasses.replace(config, setup=setup if setup != "greedy" else "greedy",
                                      seed=config.seed if not config.random_seed else 0, difficulty=difficulty)
    results = {}
    rows = []
    for mode in modes:
        metrics = []
        for i in range(n):
            scenario_seed = eval_config.seed if mode == "fixed" else derived_seed(config.master_seed, EVAL_STREAM, i)
            fire_seed = derived_seed(config.master_seed, EVAL_STREAM + 10, i)
            env = make_env(eval_config, scenario_seed, difficulty, fire_seed)
            m = run_episode(env, policy, episode=i)
            metrics.append(m)
            rows.append({"mode": mode, **m.row()})
        reward_mean, reward_std = summarize([m.reward for m in metrics])
        perf_mean, perf_std = summarize([m.mean_performance for m in metrics])
        results[mode] = {
            "episodes": n,
            "reward_mean": reward_mean,
            "reward_std": reward_std,
            "performance_mean": perf_mean,
            "performance_std": perf_std,
            "help_count_mean": float(np.mean([m.help_count for m in metrics])),
        }
    if episodes_out is not None:
        with open(episodes_out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["mode"] + METRIC_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return results


def replay(checkpoint, config, scenario_seed=None, fire_seed=0, difficulty=None):
    """Re-run one episode and return its metrics plus the per-step log."""
    policy, setup = load_policy(checkpoint, config.master_seed)
    seed = config.seed if scenario_seed is None else scenario_seed
    if seed == RANDOM_SEED:
        seed = 0
    diff = difficulty or (1 if config.difficulty == CURRICULUM else config.difficulty)
    env_config = dataclasses.replace(config, setup=setup, seed=int(seed), difficulty=int(diff))
    env = make_env(env_config, int(seed), int(diff), fire_seed)
    log = []
    metrics = run_episode(env, policy, step_log=log)
    return metrics, log


def format_stat(mean, std, digits=1):
    if math.isnan(mean):
        return "nan"
    return f"{mean:.{digits}f}±{std:.{digits}f}"
