import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wildfire_marl.reward import (
    HELP_BONUS,
    PerformanceParams,
    StepReward,
    collective_reward,
    egoistic_reward,
    performance,
    remap_distance,
    tower_performance,
)


def reference_performance(x):
    # direct transcription with the published constants
    return (1.0 + (x * 1000.0 / 270.0) ** 5) ** (-1.0 / 2.0)


def test_anchor_points():
    assert performance(0.0) == 1.0
    assert abs(performance(0.27) - 2 ** -0.5) <= 1e-12
    assert abs(performance(0.54) - 33 ** -0.5) <= 1e-12


def test_vectorised_matches_reference():
    x = np.random.default_rng(0).uniform(0, 1, 10_000)
    assert np.abs(performance(x) - np.array([reference_performance(v) for v in x])).max() <= 1e-12


def test_default_params():
    assert PerformanceParams() == PerformanceParams(decay_sign=-1, smoothness=2, break_distance=270, slope=5)


@settings(max_examples=200)
@given(st.floats(1e-6, 5.0), st.floats(1e-6, 5.0))
def test_performance_decreasing_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert 0.0 < performance(hi) <= performance(lo) <= 1.0
    if hi - lo > 1e-3 and hi < 1.5:
        assert performance(hi) < performance(lo)


@pytest.mark.parametrize(
    "raw,approaching,expected",
    [(0.0, True, 0.5), (1.0, True, 0.0), (1.0, False, 1.0), (0.5, True, 0.25), (0.0, False, 0.5)],
)
def test_remap_endpoints(raw, approaching, expected):
    assert remap_distance(raw, approaching) == expected


@settings(max_examples=100)
@given(st.floats(0, 1), st.floats(0, 1), st.booleans())
def test_remap_is_linear(a, b, approaching):
    mid = remap_distance((a + b) / 2, approaching)
    assert mid == pytest.approx((remap_distance(a, approaching) + remap_distance(b, approaching)) / 2, abs=1e-12)


def test_remap_clamps_and_logs(caplog):
    with caplog.at_level(logging.WARNING):
        assert remap_distance(1.5, False) == 1.0
    assert "clamped" in caplog.text


def test_tower_performance_cases():
    assert tower_performance(None, 236.0, True) == 0.0
    assert tower_performance(0.0, 236.0, True) == pytest.approx((1 + (500 / 270) ** 5) ** -0.5, abs=1e-12)
    assert tower_performance(236.0, 236.0, False) == pytest.approx((1 + (1000 / 270) ** 5) ** -0.5, abs=1e-12)


def test_egoistic_worked_example():
    alloc = np.zeros((9, 9))
    alloc[0, 0], alloc[0, 1] = 0.5, 0.5
    perfs = np.zeros(9)
    perfs[1] = 0.6
    assert egoistic_reward(0, alloc, perfs) == pytest.approx(0.3)


def test_egoistic_simple_cases():
    assert egoistic_reward(3, np.zeros((9, 9)), np.ones(9)) == 0.0
    alloc = np.zeros((9, 9))
    alloc[2, 2] = 1.0
    perfs = np.zeros(9)
    perfs[2] = 0.8
    assert egoistic_reward(2, alloc, perfs) == pytest.approx(0.8)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 5), min_size=9, max_size=9), st.lists(st.floats(0, 1), min_size=9, max_size=9))
def test_egoistic_linear_in_allocation(tenths, perfs):
    alloc = np.zeros((9, 9))
    alloc[0] = np.array(tenths) / 10
    assert egoistic_reward(0, 2 * alloc, perfs) == pytest.approx(2 * egoistic_reward(0, alloc, perfs))


def test_collective_cases():
    assert collective_reward(np.zeros(9)) == 0.0
    assert collective_reward(np.ones(9)) == 1.0
    assert collective_reward([0.9] + [0.0] * 8) == pytest.approx(0.1)


@settings(max_examples=50)
@given(st.permutations(list(range(9))))
def test_collective_permutation_invariant(perm):
    perfs = np.linspace(0.05, 0.95, 9)
    assert collective_reward(perfs[list(perm)]) == pytest.approx(collective_reward(perfs))


def test_step_reward_total():
    r = StepReward(egoistic=np.array([0.2, 0.0]), collective=0.1, bonus=np.array([0.0, HELP_BONUS]))
    assert np.allclose(r.total, [0.3, 0.2])
    assert HELP_BONUS == 0.1
