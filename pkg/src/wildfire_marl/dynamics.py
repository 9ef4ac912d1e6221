"""Weather fields and the probabilistic fire-spread model."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .noise import fbm
from .scenario import ALIVE, BURNED, BURNING, GRID_SIZE, SPREAD_RADIUS, WORLD_EXTENT

TEMP_MIN, TEMP_MAX = 10.0, 40.0
BURN_STEPS = 10
SPREAD_STEP = 0.2

WIND_ANGLE_LIMIT = np.deg2rad(45.0)
TEMP_THRESHOLD = 21.0
HUMIDITY_THRESHOLD = 0.5

WEATHER_FEATURE_SCALE = 400.0
WEATHER_TIME_SCALE = 0.02
# noise is evaluated every KEYFRAME steps and linearly blended in between
WEATHER_KEYFRAME = 10
WEATHER_OCTAVES = 3
MAX_WIND_SPEED = 12.0


class NoIgnitionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpreadRules:
    """Switches for the ambiguous spread conditions.

    ``humidity_rule="verbatim"`` counts humidity *above* the threshold as a
    spread condition; ``"inverted"`` counts humidity below it.
    """

    humidity_rule: str = "verbatim"

    def __post_init__(self):
        if self.humidity_rule not in ("verbatim", "inverted"):
            raise ValueError(f"unknown humidity_rule {self.humidity_rule!r}")


@dataclass
class WeatherState:
    main_wind_direction: np.ndarray
    wind_field: np.ndarray
    overcast: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray
    t: int = 0

    def at_cells(self, cells):
        ix, iz = cells[..., 0], cells[..., 1]
        return self.temperature[ix, iz], self.humidity[ix, iz], self.overcast[ix, iz]


def _stretch(n, gain):
    return np.clip(0.5 + gain * (n - 0.5), 0.0, 1.0)


def main_wind_direction(seed):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x3141]))
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([np.cos(angle), np.sin(angle)])


@lru_cache(maxsize=4)
def _cell_coords(grid_size, world_extent):
    centers = (np.arange(grid_size) + 0.5) * (world_extent / grid_size) / WEATHER_FEATURE_SCALE
    gx, gz = np.meshgrid(centers, centers, indexing="ij")
    gx.setflags(write=False)
    gz.setflags(write=False)
    return gx, gz


@lru_cache(maxsize=256)
def _keyframe(seed, k, grid_size, world_extent):
    gx, gz = _cell_coords(grid_size, world_extent)
    tt = np.full_like(gx, k * WEATHER_KEYFRAME * WEATHER_TIME_SCALE)
    base = int(seed) * 7 + 101
    fields = np.stack([
        fbm(gx, gz, tt, seed=base + i, octaves=WEATHER_OCTAVES) for i in range(5)
    ])
    fields.setflags(write=False)
    return fields


def generate_weather(seed, t, grid_size=GRID_SIZE, world_extent=WORLD_EXTENT):
    """Weather fields at time step ``t``; a pure function of ``(seed, t)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    k, r = divmod(int(t), WEATHER_KEYFRAME)
    a = _keyframe(int(seed), k, grid_size, world_extent)
    if r:
        b = _keyframe(int(seed), k + 1, grid_size, world_extent)
        frac = r / WEATHER_KEYFRAME
        raw = a + frac * (b - a)
    else:
        raw = a
    overcast = np.clip(3.0 * (raw[0] - 0.5), 0.0, 1.0)
    temperature = TEMP_MIN + (TEMP_MAX - TEMP_MIN) * _stretch(raw[1], 3.0)
    humidity = _stretch(raw[2], 3.0)
    main = main_wind_direction(seed)
    speed = MAX_WIND_SPEED * raw[3]
    angle = np.arctan2(main[1], main[0]) + (raw[4] - 0.5) * np.pi
    wind = np.stack([speed * np.cos(angle), speed * np.sin(angle)], axis=-1)
    return WeatherState(
        main_wind_direction=main,
        wind_field=wind,
        overcast=overcast,
        temperature=temperature,
        humidity=humidity,
        t=int(t),
    )


def normalized_temperature(temp):
    return (np.asarray(temp) - TEMP_MIN) / (TEMP_MAX - TEMP_MIN)


def select_ignition(weather, forest, alive=None):
    """Index of the alive tree with the driest, hottest, clearest cell."""
    if alive is None:
        alive = forest.state == ALIVE
    candidates = np.flatnonzero(alive)
    if len(candidates) == 0:
        raise NoIgnitionError("forest has no alive tree to ignite")
    temp, hum, oc = weather.at_cells(forest.cells[candidates])
    score = (1.0 - oc) + normalized_temperature(temp) + (1.0 - hum)
    # argmax returns the first maximum, i.e. the lowest tree index
    return int(candidates[np.argmax(score)])


def spread_condition_count(src_pos, dst_pos, dst_temp, dst_hum, dst_oc, wind_dir, rules=SpreadRules()):
    """Number of satisfied spread conditions for each source/target pair (vectorised)."""
    src_pos = np.asarray(src_pos, dtype=np.float64)
    dst_pos = np.asarray(dst_pos, dtype=np.float64)
    d = dst_pos - src_pos
    horiz = d[..., [0, 2]]
    norm = np.linalg.norm(horiz, axis=-1)
    cos = np.divide(
        horiz @ np.asarray(wind_dir, dtype=np.float64),
        norm,
        out=np.full(norm.shape, -1.0),
        where=norm > 0,
    )
    downwind = np.arccos(np.clip(cos, -1.0, 1.0)) < WIND_ANGLE_LIMIT
    uphill = dst_pos[..., 1] > src_pos[..., 1]
    hot = np.asarray(dst_temp) > TEMP_THRESHOLD
    if rules.humidity_rule == "verbatim":
        humid = np.asarray(dst_hum) > HUMIDITY_THRESHOLD
    else:
        humid = np.asarray(dst_hum) < HUMIDITY_THRESHOLD
    clear = np.asarray(dst_oc) == 0.0
    return (
        downwind.astype(np.int64) + uphill + hot + humid + clear
    )


def spread_probability(src_pos, dst_pos, dst_temp, dst_hum, dst_oc, wind_dir, rules=SpreadRules()):
    """Ignition probability from a burning source to an alive target.

    Zero beyond ``SPREAD_RADIUS``; otherwise 0.2 per satisfied condition.
    """
    dist = np.linalg.norm(np.asarray(dst_pos, dtype=np.float64) - np.asarray(src_pos, dtype=np.float64), axis=-1)
    k = spread_condition_count(src_pos, dst_pos, dst_temp, dst_hum, dst_oc, wind_dir, rules)
    p = np.round(SPREAD_STEP * k, 10)
    p = np.where(dist > SPREAD_RADIUS, 0.0, p)
    return float(p) if np.ndim(p) == 0 else p


@dataclass
class FireState:
    state: np.ndarray
    burn_timer: np.ndarray
    ignition_step: int = -1

    @classmethod
    def from_forest(cls, forest):
        return cls(state=forest.state.copy(), burn_timer=forest.burn_timer.copy())

    @property
    def burning(self):
        return np.flatnonzero(self.state == BURNING)

    @property
    def burned(self):
        return np.flatnonzero(self.state == BURNED)

    @property
    def alive(self):
        return self.state == ALIVE

    def copy(self):
        return FireState(self.state.copy(), self.burn_timer.copy(), self.ignition_step)

    def ignite(self, tree, t=0):
        self.state[tree] = BURNING
        self.burn_timer[tree] = BURN_STEPS
        if self.ignition_step < 0:
            self.ignition_step = int(t)


def step_fire(fire, forest, weather, rng, rules=SpreadRules()):
    """Advance the fire by one time step and return the new state.

    Every (burning source, alive target) pair within spread range gets one
    Bernoulli draw, consumed from ``rng`` in (source, target) order.
    Existing fires burn down by one; new ignitions start at ``BURN_STEPS``.
    """
    new = fire.copy()
    src, dst = forest.spread_pairs
    if len(src):
        active = (fire.state[src] == BURNING) & (fire.state[dst] == ALIVE)
        s, d = src[active], dst[active]
    else:
        s = d = src
    ignited = np.zeros(0, dtype=np.int64)
    if len(s):
        temp, hum, oc = weather.at_cells(forest.cells[d])
        p = spread_probability(
            forest.positions[s], forest.positions[d], temp, hum, oc,
            weather.main_wind_direction, rules,
        )
        draws = rng.random(len(s))
        ignited = np.unique(d[draws < p])

    burning = fire.state == BURNING
    new.burn_timer[burning] -= 1
    done = burning & (new.burn_timer <= 0)
    new.state[done] = BURNED
    new.burn_timer[done] = 0
    new.state[ignited] = BURNING
    new.burn_timer[ignited] = BURN_STEPS
    return new
