"""Episode world state and the fixed-order step loop."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import policies as P
from .comms import Inboxes
from .dynamics import FireState, NoIgnitionError, SpreadRules, generate_weather, select_ignition, step_fire
from .resources import ResourceLedger
from .reward import HELP_BONUS, PerformanceParams, StepReward, collective_reward, tower_performance
from .towers import (
    N_TOWERS,
    build_neighborhoods,
    closest_observed_fire,
    make_tower_grid,
    observe_local,
    undirected_neighbors,
)

logger = logging.getLogger(__name__)

EPISODE_LENGTH = 500
SETUPS = ("greedy", "single_agent", "multi_agent", "multi_agent_ac")
PHASES = ("weather", "observe", "act", "fire", "reward")


class PhaseOrderError(RuntimeError):
    pass


@dataclass
class StepInfo:
    t: int
    reward: StepReward
    perfs: np.ndarray
    ego_perf: np.ndarray
    burning: int
    burned: int
    accepted: np.ndarray
    help_sent: int
    help_given: int
    frontier: list = field(default_factory=list)


class WildfireEnv:
    """One episode of the lookout-tower world.

    ``reset`` ignites the fire and returns the first observation. Each
    ``step(actions)`` runs act -> fire -> reward for the current step, then
    weather -> observe for the next one, so messages sent at ``t`` are read
    at ``t + 1``.

    ``actions`` is a length-9 integer array. For ``single_agent`` each entry
    is the tower's sub-action; otherwise it is the tower's 5-way action.
    """

    def __init__(self, scenario, setup="multi_agent", fire_seed=0, rules=SpreadRules(),
                 params=PerformanceParams(), help_condition="fire", episode_length=EPISODE_LENGTH):
        if setup not in SETUPS:
            raise ValueError(f"unknown setup {setup!r}")
        if help_condition not in ("fire", "always"):
            raise ValueError(f"unknown help_condition {help_condition!r}")
        self.scenario = scenario
        self.setup = setup
        self.fire_seed = fire_seed
        self.rules = rules
        self.params = params
        self.help_condition = help_condition
        self.episode_length = episode_length
        self.terrain = scenario.terrain
        self.forest = scenario.forest
        self.world_extent = scenario.terrain.world_extent
        self.towers = make_tower_grid(self.terrain, self.world_extent)
        self.graph = build_neighborhoods(self.towers.positions)
        self.neighbors = undirected_neighbors(self.graph)
        ix, iz = self.terrain.cell_of(self.towers.positions[:, 0], self.towers.positions[:, 2])
        self.tower_cells = np.column_stack([ix, iz])
        self.phase_log = []

    @property
    def multi_agent(self):
        return self.setup != "single_agent"

    def _phase(self, name):
        expected = PHASES[len(self.phase_log) % len(PHASES)]
        if name != expected:
            raise PhaseOrderError(f"phase {name!r} out of order, expected {expected!r}")
        self.phase_log.append(name)

    def reset(self):
        self.t = 0
        self.phase_log = []
        self.rng = np.random.default_rng(np.random.SeedSequence([int(self.fire_seed), 0xF12E]))
        self.ledger = ResourceLedger(self.neighbors, N_TOWERS)
        self.inboxes = Inboxes(self.graph)
        self.fire = FireState.from_forest(self.forest)
        self.prev_fire_dist = [None] * N_TOWERS
        self.prev_frames = None
        self.done = False
        self._weather_and_observe(ignite=True)
        return self.observation

    def _weather_and_observe(self, ignite=False):
        self._phase("weather")
        self.weather = generate_weather(self.scenario.config.seed, self.t,
                                        self.terrain.grid_size, self.world_extent)
        if ignite:
            try:
                self.fire.ignite(select_ignition(self.weather, self.forest, self.fire.alive), self.t)
            except NoIgnitionError:
                logger.warning("scenario %s has no trees; running a fire-free episode", self.scenario.config)
        self._phase("observe")
        self.local_obs = [observe_local(v, self) for v in range(N_TOWERS)]
        self.inboxes.broadcast_step(self.local_obs, self.t)
        self.help_pending = [self.inboxes.help_inbox(v, self.t) for v in range(N_TOWERS)]
        self.observation = self._encode()

    def _encode(self):
        if self.multi_agent:
            frames = np.stack([P.ma_frame(v, self, self.inboxes, self.t) for v in range(N_TOWERS)])
        else:
            frames = P.sa_frame(self)[None, :]
        obs = P.stack_frames(frames, self.prev_frames)
        self.prev_frames = frames
        return obs

    def fire_distance(self, tower):
        _, d = closest_observed_fire(self.towers, tower, self.forest.positions, self.fire.burning)
        return d

    def greedy_actions(self):
        return np.array([P.greedy_act(v, self) for v in range(N_TOWERS)])

    def _apply_ma(self, agent, action, responses):
        ledger = self.ledger
        if action == P.NOOP:
            return True
        if action == P.SUPPORT_SELF:
            return ledger.distribute(agent, agent)
        if action == P.SUPPORT_REQUESTER:
            pending = self.help_pending[agent]
            if not pending:
                return False
            request = pending[0]
            ok = ledger.distribute(agent, request.sender)
            if ok:
                responses.append((agent, request))
            return ok
        if action == P.RECLAIM:
            target = ledger.oldest_allocation(agent)
            return target is not None and ledger.deduct(agent, target)
        if action == P.SEND_HELP:
            self.inboxes.send_help_request(agent, self.t)
            return True
        raise ValueError(f"unknown action {action}")

    def _apply_sa(self, tower, action):
        ledger = self.ledger
        if action == P.SA_NOOP:
            return True
        if action == P.SA_SUPPORT_SELF:
            return ledger.distribute(tower, tower)
        if action == P.SA_SUPPORT_FIRE_NEIGHBOR:
            best = None
            for u in sorted(self.neighbors[tower]):
                if self.local_obs[u].fire_visible:
                    d = np.linalg.norm(self.towers.positions[u, [0, 2]] - self.towers.positions[tower, [0, 2]])
                    if best is None or d < best[0]:
                        best = (d, u)
            return best is not None and ledger.distribute(tower, best[1])
        if action == P.SA_RECLAIM:
            target = ledger.oldest_allocation(tower)
            return target is not None and ledger.deduct(tower, target)
        raise ValueError(f"unknown sub-action {action}")

    def step(self, actions):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        actions = np.asarray(actions, dtype=np.int64).reshape(N_TOWERS)
        self._phase("act")
        accepted = np.zeros(N_TOWERS, dtype=bool)
        responses = []
        help_sent = 0
        for agent in range(N_TOWERS):
            if self.multi_agent:
                accepted[agent] = self._apply_ma(agent, int(actions[agent]), responses)
                help_sent += int(actions[agent]) == P.SEND_HELP
            else:
                accepted[agent] = self._apply_sa(agent, int(actions[agent]))

        self._phase("fire")
        self.fire = step_fire(self.fire, self.forest, self.weather, self.rng, self.rules)

        self._phase("reward")
        perfs = np.zeros(N_TOWERS)
        dists = [self.fire_distance(v) for v in range(N_TOWERS)]
        for v, d in enumerate(dists):
            if d is None:
                continue
            prev = self.prev_fire_dist[v]
            approaching = prev is None or d < prev
            perfs[v] = tower_performance(d, self.towers.observation_radius, approaching, self.params)
        self.prev_fire_dist = dists
        alloc = self.ledger.allocation_values()
        ego = alloc @ perfs
        bonus = np.zeros(N_TOWERS)
        for responder, request in responses:
            helped = self.help_condition == "always" or dists[request.sender] is not None
            if self.inboxes.register_response(request, responder, self.t, helped):
                bonus[responder] += HELP_BONUS
        reward = StepReward(egoistic=ego, collective=collective_reward(perfs), bonus=bonus)
        info = StepInfo(
            t=self.t,
            reward=reward,
            perfs=perfs,
            ego_perf=ego,
            burning=len(self.fire.burning),
            burned=len(self.fire.burned),
            accepted=accepted,
            help_sent=help_sent,
            help_given=int((bonus > 0).sum()),
        )

        self.t += 1
        if self.t >= self.episode_length:
            self.done = True
        else:
            self._weather_and_observe()
        if self.multi_agent:
            rewards = reward.total
        else:
            rewards = np.array([reward.total.mean()])
        return self.observation, rewards, self.done, info
