import numpy as np
import pytest

from wildfire_marl import policies as P
from wildfire_marl.env import WildfireEnv


@pytest.fixture
def env(scenario0):
    e = WildfireEnv(scenario0, setup="multi_agent", fire_seed=0)
    e.reset()
    return e


def test_layout_constants():
    assert (P.MA_FRAME, P.MA_OBS_DIM, P.SA_FRAME, P.SA_OBS_DIM) == (32, 64, 63, 126)
    assert P.MA_BRANCHES == (5,) and sum(P.SA_BRANCHES) == 36 and len(P.SA_BRANCHES) == 9


def test_greedy_fills_then_idles(env):
    seen = []
    for _ in range(15):
        actions = env.greedy_actions()
        seen.append(actions.copy())
        env.step(actions)
    for t, actions in enumerate(seen):
        assert (actions == (P.SUPPORT_SELF if t < 10 else P.NOOP)).all()
    assert all(env.ledger.reserve_value(v) == 0.0 for v in range(9))


def test_greedy_ignores_help_requests(env):
    actions = np.full(9, P.SEND_HELP)
    env.step(actions)
    assert any(env.help_pending[v] for v in range(9))
    assert set(env.greedy_actions()) == {P.SUPPORT_SELF}


def test_greedy_noop_without_reserve(env):
    for _ in range(10):
        env.ledger.distribute(3, 3)
    assert P.greedy_act(3, env) == P.NOOP


def test_first_observation_has_zero_history(env):
    obs = env.observation
    assert obs.shape == (9, 64)
    assert not obs[:, 32:].any()


def test_observations_normalised_over_episode(env):
    rng = np.random.default_rng(0)
    prev = env.observation
    for _ in range(40):
        obs, _, _, _ = env.step(rng.integers(0, 5, 9))
        assert obs.shape == (9, 64) and np.isfinite(obs).all()
        assert obs.min() >= 0.0 and obs.max() <= 1.0
        assert np.array_equal(obs[:, 32:], prev[:, :32])
        prev = obs


def test_encode_observation_helpers(env):
    vec, frame = P.encode_observation_ma(4, env, env.inboxes, None, env.t)
    assert vec.shape == (64,) and np.array_equal(vec[:32], frame) and not vec[32:].any()
    vec, frame = P.encode_observation_sa(env, frame := P.sa_frame(env))
    assert vec.shape == (126,)


def test_every_action_decodes(scenario0):
    for setup, n in (("multi_agent", 5), ("single_agent", 4)):
        env = WildfireEnv(scenario0, setup=setup, fire_seed=1)
        env.reset()
        for a in range(n):
            for _ in range(12):
                env.step(np.full(9, a))
            env.ledger.check_invariants()


def test_greedy_positive_when_fire_observed(scenario0):
    env = WildfireEnv(scenario0, setup="greedy", fire_seed=0)
    env.reset()
    total, observed = 0.0, False
    for _ in range(60):
        _, r, _, info = env.step(env.greedy_actions())
        total += r.sum()
        observed |= bool(info.perfs.any())
    assert observed and total > 0.0
