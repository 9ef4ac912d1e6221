"""Observation layouts, action tables and the greedy baseline."""
import numpy as np

from .comms import FRAME_WIDTH, assemble_frame
from .towers import N_TOWERS, OBS_WIDTH

STACK = 2

# multi-agent actions (one per tower per step)
NOOP, SUPPORT_SELF, SUPPORT_REQUESTER, RECLAIM, SEND_HELP = range(5)
MA_ACTIONS = ("noop", "support_self", "support_requester", "reclaim", "send_help")
N_MA_ACTIONS = len(MA_ACTIONS)

# single-agent sub-actions, one branch per tower
SA_NOOP, SA_SUPPORT_SELF, SA_SUPPORT_FIRE_NEIGHBOR, SA_RECLAIM = range(4)
SA_SUBACTIONS = ("noop", "support_self", "support_fire_neighbor", "reclaim")
N_SA_SUBACTIONS = len(SA_SUBACTIONS)

MA_FRAME = FRAME_WIDTH
SA_FRAME = N_TOWERS * OBS_WIDTH
MA_OBS_DIM = STACK * MA_FRAME
SA_OBS_DIM = STACK * SA_FRAME

MA_BRANCHES = (N_MA_ACTIONS,)
SA_BRANCHES = (N_SA_SUBACTIONS,) * N_TOWERS


def stack_frames(current, previous):
    """Concatenate the current frame with the previous one (zeros at t = 0)."""
    if previous is None:
        previous = np.zeros_like(current)
    return np.concatenate([current, previous], axis=-1)


def ma_frame(tower, world, inboxes, t):
    return assemble_frame(
        world.local_obs[tower],
        inboxes.broadcast_inbox(tower, t),
        inboxes.help_inbox(tower, t),
        world.ledger.reserve_value(tower),
        world.world_extent,
    )


def encode_observation_ma(tower, world, inboxes, prev_frame, t):
    """64-vector for one tower: this step's 32-wide frame followed by the last one."""
    frame = ma_frame(tower, world, inboxes, t)
    return stack_frames(frame, prev_frame), frame


def sa_frame(world):
    return np.concatenate([world.local_obs[v].features(world.world_extent) for v in range(N_TOWERS)])


def encode_observation_sa(world, prev_frame):
    frame = sa_frame(world)
    return stack_frames(frame, prev_frame), frame


def greedy_act(tower, world):
    """Fill own tower while reserve lasts, then idle."""
    return SUPPORT_SELF if world.ledger.reserve[tower] >= 1 else NOOP


def act(network, observation, rng):
    """Sample from a policy network; see ``learner.PolicyNetwork.act``."""
    return network.act(np.atleast_2d(observation), rng)
