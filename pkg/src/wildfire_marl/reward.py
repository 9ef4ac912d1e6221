"""Tower preparedness score and the per-step reward terms."""
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

HELP_BONUS = 0.1


@dataclass(frozen=True)
class PerformanceParams:
    # exponent numerator, exponent denominator, break distance (m), slope
    decay_sign: float = -1.0
    smoothness: float = 2.0
    break_distance: float = 270.0
    slope: float = 5.0


def remap_distance(raw, approaching):
    """Map a normalised fire distance onto [0, 0.5] (approaching) or [0.5, 1]."""
    clipped = float(np.clip(raw, 0.0, 1.0))
    if clipped != raw:
        logger.warning("remap_distance input %r outside [0, 1]; clamped", raw)
    return 0.5 - 0.5 * clipped if approaching else 0.5 + 0.5 * clipped


def performance(remapped, params=PerformanceParams()):
    """Broken power law of a remapped distance, equal to 1 at zero."""
    scaled = np.asarray(remapped, dtype=np.float64) * 1000.0 / params.break_distance
    out = (1.0 + scaled ** params.slope) ** (params.decay_sign / params.smoothness)
    return float(out) if out.ndim == 0 else out


def tower_performance(distance, radius, approaching, params=PerformanceParams()):
    """Score for one tower; ``distance=None`` (nothing observed) scores 0."""
    if distance is None:
        return 0.0
    return performance(remap_distance(distance / radius, approaching), params)


def egoistic_reward(agent, allocation, perfs):
    """Sum over targets of the agent's allocation times the target's score."""
    return float(np.dot(np.asarray(allocation)[agent], perfs))


def collective_reward(perfs):
    return float(np.mean(perfs))


@dataclass
class StepReward:
    egoistic: np.ndarray
    collective: float
    bonus: np.ndarray

    @property
    def total(self):
        return self.egoistic + self.collective + self.bonus
