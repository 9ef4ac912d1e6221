"""PPO-Clip with GAE, entropy bonus, linear learning-rate decay and a curiosity signal."""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .comms import FRAME_WIDTH, MessagePassingEncoder

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


class TrainingAborted(RuntimeError):
    pass


@dataclass
class PPOConfig:
    batch_size: int = 128
    buffer_size: int = 2048
    learning_rate: float = 3e-4
    beta: float = 0.01
    epsilon: float = 0.2
    lambd: float = 0.95
    gamma: float = 0.99
    num_epoch: int = 3
    time_horizon: int = 128
    hidden_units: int = 512
    num_layers: int = 2
    max_steps: int = 500_000
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    curiosity_strength: float = 0.02
    curiosity_gamma: float = 0.99
    curiosity_encoding_size: int = 256
    curiosity_learning_rate: float = 3e-4
    encoder_edge_width: int = 32
    encoder_out_width: int = 64

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        for name in ("gamma", "lambd", "curiosity_gamma"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in (0, 1]")
        for name in ("batch_size", "buffer_size", "num_epoch", "time_horizon", "hidden_units",
                     "num_layers", "max_steps", "curiosity_encoding_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return asdict(self)


def compute_gae(rewards, values, bootstrap_value, gamma, lambd, dones=None):
    """Generalised advantage estimates and returns-to-go for one segment.

    ``dones[t]`` marks that the episode ended after step ``t``; no value is
    bootstrapped across it. ``bootstrap_value`` is V of the state after the
    last step (ignored if the last step is terminal).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError(f"rewards {rewards.shape} and values {values.shape} differ in length")
    n = len(rewards)
    dones = np.zeros(n, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    if dones.shape != rewards.shape:
        raise ValueError("dones must align with rewards")
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = values[t + 1] if t + 1 < n else bootstrap_value
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lambd * nonterminal * last
        adv[t] = last
    return adv, adv + values


def clip_objective(ratio, advantage, epsilon=0.2):
    """``min(ratio * A, g(epsilon, A))`` with ``g = (1 + eps) A`` for ``A >= 0`` else ``(1 - eps) A``."""
    if isinstance(ratio, torch.Tensor):
        g = torch.where(advantage >= 0, (1 + epsilon) * advantage, (1 - epsilon) * advantage)
        return torch.minimum(ratio * advantage, g)
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    g = np.where(advantage >= 0, (1 + epsilon) * advantage, (1 - epsilon) * advantage)
    out = np.minimum(ratio * advantage, g)
    return float(out) if out.ndim == 0 else out


def linear_lr(base, step, max_steps):
    return base * max(0.0, 1.0 - step / max_steps)


def _init_layer(layer, gain):
    nn.init.orthogonal_(layer.weight, gain=gain)
    if layer.bias is not None:
        nn.init.zeros_(layer.bias)
    return layer


def _mlp(sizes):
    layers = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        layers += [_init_layer(nn.Linear(a, b), np.sqrt(2.0)), nn.ReLU()]
    return nn.Sequential(*layers)


def one_hot_actions(actions, branches):
    actions = torch.as_tensor(actions, dtype=torch.long).reshape(-1, len(branches))
    return torch.cat([F.one_hot(actions[:, i], b).float() for i, b in enumerate(branches)], dim=-1)


class PolicyNetwork(nn.Module):
    """Shared trunk with a categorical head per action branch and a value head.

    With ``use_encoder`` the stacked observation is split into frames of
    ``FRAME_WIDTH`` and each frame is embedded by the message-passing encoder
    before the trunk.
    """

    def __init__(self, obs_dim, branches, hidden_units=512, num_layers=2, use_encoder=False,
                 edge_width=32, encoder_out=64):
        super().__init__()
        self.obs_dim = obs_dim
        self.branches = tuple(branches)
        self.encoder = None
        trunk_in = obs_dim
        if use_encoder:
            if obs_dim % FRAME_WIDTH:
                raise ValueError(f"obs_dim {obs_dim} is not a multiple of {FRAME_WIDTH}")
            self.encoder = MessagePassingEncoder(edge_width, encoder_out)
            _init_layer(self.encoder.edge, np.sqrt(2.0))
            _init_layer(self.encoder.node, np.sqrt(2.0))
            trunk_in = (obs_dim // FRAME_WIDTH) * encoder_out
        self.trunk = _mlp([trunk_in] + [hidden_units] * num_layers)
        self.policy_head = _init_layer(nn.Linear(hidden_units, sum(self.branches)), 0.01)
        self.value_head = _init_layer(nn.Linear(hidden_units, 1), 1.0)

    def forward(self, obs):
        x = obs
        if self.encoder is not None:
            frames = x.reshape(*x.shape[:-1], -1, FRAME_WIDTH)
            x = self.encoder(frames).flatten(start_dim=-2)
        h = self.trunk(x)
        logits = torch.split(self.policy_head(h), self.branches, dim=-1)
        return logits, self.value_head(h).squeeze(-1)

    def distribution(self, obs, actions=None):
        """Joint log-probability of ``actions`` (if given), total entropy, value."""
        logits, value = self(obs)
        logp_all = [F.log_softmax(lg, dim=-1) for lg in logits]
        entropy = sum(-(lp.exp() * lp).sum(-1) for lp in logp_all)
        logp = None
        if actions is not None:
            actions = actions.reshape(-1, len(self.branches))
            logp = sum(lp.gather(-1, actions[:, i:i + 1]).squeeze(-1) for i, lp in enumerate(logp_all))
        return logp, entropy, value, logp_all

    @torch.no_grad()
    def act(self, obs, rng):
        """Sample one action per branch using ``rng``; returns actions, log-probs, values."""
        obs_t = torch.as_tensor(np.atleast_2d(obs), dtype=torch.float32)
        logits, value = self(obs_t)
        actions = []
        logp = np.zeros(obs_t.shape[0])
        for lg in logits:
            if not torch.isfinite(lg).all():
                raise TrainingAborted("non-finite policy logits")
            lp = F.log_softmax(lg.double(), dim=-1).numpy()
            probs = np.exp(lp)
            cdf = np.cumsum(probs, axis=-1)
            u = rng.random(len(cdf))[:, None] * cdf[:, -1:]
            a = np.minimum((u >= cdf).sum(axis=-1), lp.shape[-1] - 1)
            actions.append(a)
            logp += lp[np.arange(len(a)), a]
        return np.stack(actions, axis=-1), logp, value.double().numpy()


class CuriosityModule(nn.Module):
    """Forward/inverse dynamics in a learned feature space.

    The intrinsic reward is ``strength * 0.5 * ||forward(phi(s), a) - phi(s')||^2``.
    """

    def __init__(self, obs_dim, branches, encoding_size=256, strength=0.02):
        super().__init__()
        self.branches = tuple(branches)
        self.strength = strength
        self.encoder = nn.Sequential(_init_layer(nn.Linear(obs_dim, encoding_size), np.sqrt(2.0)), nn.ReLU())
        n_act = sum(self.branches)
        self.forward_model = nn.Sequential(
            _init_layer(nn.Linear(encoding_size + n_act, 256), np.sqrt(2.0)), nn.ReLU(),
            _init_layer(nn.Linear(256, encoding_size), 1.0),
        )
        self.inverse_model = nn.Sequential(
            _init_layer(nn.Linear(2 * encoding_size, 256), np.sqrt(2.0)), nn.ReLU(),
            _init_layer(nn.Linear(256, n_act), 0.01),
        )

    def predict_next(self, obs, actions):
        phi = self.encoder(obs)
        return self.forward_model(torch.cat([phi, one_hot_actions(actions, self.branches)], dim=-1))

    def intrinsic_reward(self, obs, actions, next_obs):
        with torch.no_grad():
            obs = torch.as_tensor(obs, dtype=torch.float32)
            next_obs = torch.as_tensor(next_obs, dtype=torch.float32)
            err = self.predict_next(obs, actions) - self.encoder(next_obs)
            return (self.strength * 0.5 * (err.double() ** 2).sum(-1)).numpy()

    def loss(self, obs, actions, next_obs):
        phi = self.encoder(obs)
        phi_next = self.encoder(next_obs)
        pred = self.forward_model(torch.cat([phi, one_hot_actions(actions, self.branches)], dim=-1))
        forward_loss = 0.5 * ((pred - phi_next.detach()) ** 2).sum(-1).mean()
        inv_logits = torch.split(self.inverse_model(torch.cat([phi, phi_next], dim=-1)), self.branches, dim=-1)
        acts = actions.reshape(-1, len(self.branches))
        inverse_loss = sum(F.cross_entropy(lg, acts[:, i]) for i, lg in enumerate(inv_logits))
        return forward_loss, inverse_loss


def intrinsic_reward(obs_t, action_t, obs_t1, icm):
    return icm.intrinsic_reward(np.atleast_2d(obs_t), np.atleast_1d(action_t), np.atleast_2d(obs_t1))


def ppo_loss(network, batch, epsilon, beta, value_coef):
    """Scalar loss to minimise plus diagnostics for one minibatch."""
    logp, entropy, value, _ = network.distribution(batch["obs"], batch["actions"])
    ratio = torch.exp(logp - batch["logp"])
    surrogate = clip_objective(ratio, batch["advantages"], epsilon).mean()
    value_loss = ((value - batch["returns"]) ** 2).mean()
    ent = entropy.mean()
    loss = -surrogate - beta * ent + value_coef * value_loss
    with torch.no_grad():
        clipped = ((ratio - 1.0).abs() > epsilon).float().mean()
        return loss, {
            "policy_loss": float(-surrogate),
            "value_loss": float(value_loss),
            "entropy": float(ent),
            "ratio": float(ratio.mean()),
            "clip_fraction": float(clipped),
        }


@dataclass
class RolloutBuffer:
    """Flat store of finished trajectory segments."""

    obs: list = field(default_factory=list)
    next_obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    values: list = field(default_factory=list)
    advantages: list = field(default_factory=list)
    returns: list = field(default_factory=list)

    def __len__(self):
        return sum(len(a) for a in self.logp)

    def add(self, **segment):
        for key, value in segment.items():
            getattr(self, key).append(np.asarray(value))

    def arrays(self):
        return {k: np.concatenate(getattr(self, k)) for k in
                ("obs", "next_obs", "actions", "logp", "values", "advantages", "returns")}


class SegmentCollector:
    """Per-agent running segment that is cut at the time horizon or episode end."""

    def __init__(self):
        self.clear()

    def clear(self):
        self.obs, self.actions, self.logp, self.values, self.rewards, self.next_obs = [], [], [], [], [], []

    def __len__(self):
        return len(self.rewards)

    def append(self, obs, action, logp, value, reward, next_obs):
        self.obs.append(obs)
        self.actions.append(action)
        self.logp.append(logp)
        self.values.append(value)
        self.rewards.append(reward)
        self.next_obs.append(next_obs)


class PPOTrainer:
    """Owns the policy, curiosity module, optimisers and the experience buffer."""

    def __init__(self, obs_dim, branches, config=None, use_encoder=False, seed=0):
        self.config = config or PPOConfig()
        self.obs_dim = obs_dim
        self.branches = tuple(branches)
        self.use_encoder = use_encoder
        c = self.config
        torch.manual_seed(int(seed))
        self.network = PolicyNetwork(obs_dim, branches, c.hidden_units, c.num_layers, use_encoder,
                                     c.encoder_edge_width, c.encoder_out_width)
        self.icm = None
        if c.curiosity_strength > 0:
            self.icm = CuriosityModule(obs_dim, branches, c.curiosity_encoding_size, c.curiosity_strength)
            self.icm_optimizer = torch.optim.Adam(self.icm.parameters(), lr=c.curiosity_learning_rate)
        self.optimizer = torch.optim.Adam(self.network.parameters(), lr=c.learning_rate)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x990]))
        self.buffer = RolloutBuffer()
        self.step = 0
        self.updates = 0

    def act(self, obs):
        return self.network.act(obs, self.rng)

    def value(self, obs):
        with torch.no_grad():
            _, v = self.network(torch.as_tensor(np.atleast_2d(obs), dtype=torch.float32))
        return v.double().numpy()

    def finish_segment(self, seg, terminal):
        """Turn a segment into buffer rows, adding curiosity reward and GAE."""
        if not len(seg):
            return
        obs = np.asarray(seg.obs, dtype=np.float32)
        next_obs = np.asarray(seg.next_obs, dtype=np.float32)
        actions = np.asarray(seg.actions, dtype=np.int64).reshape(len(seg), -1)
        rewards = np.asarray(seg.rewards, dtype=np.float64)
        if self.icm is not None:
            rewards = rewards + self.icm.intrinsic_reward(obs, actions, next_obs)
        bootstrap = 0.0 if terminal else float(self.value(next_obs[-1:])[0])
        dones = np.zeros(len(seg), dtype=bool)
        dones[-1] = terminal
        adv, ret = compute_gae(rewards, seg.values, bootstrap, self.config.gamma, self.config.lambd, dones)
        self.buffer.add(obs=obs, next_obs=next_obs, actions=actions, logp=np.asarray(seg.logp),
                        values=np.asarray(seg.values), advantages=adv, returns=ret)
        seg.clear()

    def ready(self):
        return len(self.buffer) >= self.config.buffer_size

    def current_lr(self):
        return linear_lr(self.config.learning_rate, self.step, self.config.max_steps)

    def update(self):
        """Run ``num_epoch`` passes of minibatch PPO over the buffer, then clear it."""
        c = self.config
        data = self.buffer.arrays()
        self.buffer = RolloutBuffer()
        adv = data["advantages"]
        data["advantages"] = (adv - adv.mean()) / (adv.std() + 1e-8)
        tensors = {
            "obs": torch.as_tensor(data["obs"], dtype=torch.float32),
            "next_obs": torch.as_tensor(data["next_obs"], dtype=torch.float32),
            "actions": torch.as_tensor(data["actions"], dtype=torch.long),
            "logp": torch.as_tensor(data["logp"], dtype=torch.float32),
            "advantages": torch.as_tensor(data["advantages"], dtype=torch.float32),
            "returns": torch.as_tensor(data["returns"], dtype=torch.float32),
        }
        lr = self.current_lr()
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        if self.icm is not None:
            for group in self.icm_optimizer.param_groups:
                group["lr"] = linear_lr(c.curiosity_learning_rate, self.step, c.max_steps)
        n = len(data["logp"])
        stats = []
        for _ in range(c.num_epoch):
            order = self.rng.permutation(n)
            for start in range(0, n, c.batch_size):
                idx = torch.as_tensor(order[start:start + c.batch_size])
                batch = {k: v[idx] for k, v in tensors.items()}
                loss, diag = ppo_loss(self.network, batch, c.epsilon, c.beta, c.value_coef)
                if not torch.isfinite(loss):
                    raise TrainingAborted(f"non-finite PPO loss at step {self.step}")
                self.optimizer.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(self.network.parameters(), c.max_grad_norm)
                self.optimizer.step()
                if self.icm is not None:
                    fwd, inv = self.icm.loss(batch["obs"], batch["actions"], batch["next_obs"])
                    icm_loss = 0.2 * fwd + 0.8 * inv
                    self.icm_optimizer.zero_grad()
                    icm_loss.backward()
                    self.icm_optimizer.step()
                    diag["curiosity_forward_loss"] = float(fwd.detach())
                    diag["curiosity_inverse_loss"] = float(inv.detach())
                stats.append(diag)
        for p in self.network.parameters():
            if not torch.isfinite(p).all():
                raise TrainingAborted("non-finite parameters after update")
        self.updates += 1
        out = {k: float(np.mean([s[k] for s in stats])) for k in stats[0]}
        out["learning_rate"] = lr
        out["buffer_rows"] = n
        return out

    def state_dict(self):
        state = {
            "format_version": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "obs_dim": self.obs_dim,
            "branches": list(self.branches),
            "use_encoder": self.use_encoder,
            "network": self.network.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "rng": self.rng.bit_generator.state,
            "step": self.step,
            "updates": self.updates,
        }
        if self.icm is not None:
            state["icm"] = self.icm.state_dict()
            state["icm_optimizer"] = self.icm_optimizer.state_dict()
        return state

    def save(self, path):
        torch.save(self.state_dict(), path)

    @classmethod
    def load(cls, path):
        state = torch.load(path, map_location="cpu", weights_only=False)
        if state.get("format_version") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {state.get('format_version')!r}")
        trainer = cls(state["obs_dim"], state["branches"], PPOConfig(**state["config"]), state["use_encoder"])
        trainer.network.load_state_dict(state["network"])
        trainer.optimizer.load_state_dict(state["optimizer"])
        trainer.rng.bit_generator.state = state["rng"]
        trainer.step = state["step"]
        trainer.updates = state["updates"]
        if trainer.icm is not None and "icm" in state:
            trainer.icm.load_state_dict(state["icm"])
            trainer.icm_optimizer.load_state_dict(state["icm_optimizer"])
        return trainer
