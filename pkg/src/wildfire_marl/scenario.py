"""Procedural static environment: terrain heightmap and forest placement."""
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .noise import fbm

WORLD_EXTENT = 1000.0
GRID_SIZE = 100
N_DIFFICULTIES = 10
AMPLITUDE_PER_LEVEL = 20.0
TREE_SPACING = 8.0
# fraction of the highest reachable terrain (difficulty 10) above which nothing grows
TREE_LINE_FRACTION = 0.6
TERRAIN_FEATURE_SCALE = 250.0
SPREAD_RADIUS = 10.0

ALIVE, BURNING, BURNED = 0, 1, 2

SCENARIO_FORMAT_VERSION = 1


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    difficulty: int = 1
    grid_size: int = GRID_SIZE
    world_extent: float = WORLD_EXTENT

    def __post_init__(self):
        if not isinstance(self.difficulty, (int, np.integer)) or not 1 <= self.difficulty <= N_DIFFICULTIES:
            raise ConfigurationError(f"difficulty must be an integer in [1, 10], got {self.difficulty!r}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if self.grid_size < 1 or self.world_extent <= 0:
            raise ConfigurationError("grid_size and world_extent must be positive")

    @property
    def cell_size(self):
        return self.world_extent / self.grid_size


def amplitude(difficulty):
    return AMPLITUDE_PER_LEVEL * difficulty


def tree_line():
    return TREE_LINE_FRACTION * amplitude(N_DIFFICULTIES)


@dataclass
class TerrainGrid:
    """Heights in meters indexed ``[ix, iz]``."""

    heights: np.ndarray
    world_extent: float = WORLD_EXTENT

    @property
    def grid_size(self):
        return self.heights.shape[0]

    @property
    def cell_size(self):
        return self.world_extent / self.grid_size

    def cell_of(self, x, z):
        n = self.grid_size
        ix = np.clip((np.asarray(x) / self.cell_size).astype(np.int64), 0, n - 1)
        iz = np.clip((np.asarray(z) / self.cell_size).astype(np.int64), 0, n - 1)
        return ix, iz

    def height_at(self, x, z):
        ix, iz = self.cell_of(x, z)
        return self.heights[ix, iz]

    def checksum(self):
        return hashlib.sha256(np.ascontiguousarray(self.heights, dtype="<f8").tobytes()).hexdigest()


@dataclass
class ForestMap:
    """Tree positions ``(x, height, z)`` with their initial fire state."""

    positions: np.ndarray
    cells: np.ndarray
    state: np.ndarray = field(default=None)
    burn_timer: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.positions)
        if self.state is None:
            self.state = np.full(n, ALIVE, dtype=np.int8)
        if self.burn_timer is None:
            self.burn_timer = np.zeros(n, dtype=np.int64)

    def __len__(self):
        return len(self.positions)

    @cached_property
    def spread_pairs(self):
        """Directed ``(source, target)`` pairs within spread range, sorted lexicographically."""
        if len(self) < 2:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        pairs = cKDTree(self.positions).query_pairs(SPREAD_RADIUS, output_type="ndarray")
        src = np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64)
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64)
        order = np.lexsort((dst, src))
        return src[order], dst[order]


def generate_terrain(config):
    n = config.grid_size
    centers = (np.arange(n) + 0.5) * config.cell_size / TERRAIN_FEATURE_SCALE
    gx, gz = np.meshgrid(centers, centers, indexing="ij")
    base = fbm(gx, gz, seed=config.seed, octaves=4, persistence=0.5)
    return TerrainGrid(heights=base * amplitude(config.difficulty), world_extent=config.world_extent)


def tree_density(height):
    """Fraction of lattice sites that carry a tree at the given terrain height."""
    return np.clip(1.0 - np.asarray(height, dtype=np.float64) / tree_line(), 0.0, 1.0)


def place_forest(terrain, config):
    """Jittered-lattice forest, thinned by terrain height.

    One candidate site per ``TREE_SPACING`` square; a candidate survives with
    probability ``tree_density(h)``. The jitter and thinning draws depend only
    on the seed, so a flat terrain keeps every site.
    """
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xF0E57]))
    per_side = int(round(terrain.world_extent / TREE_SPACING))
    ii, jj = np.meshgrid(np.arange(per_side), np.arange(per_side), indexing="ij")
    jitter = rng.random((2, per_side, per_side))
    keep_draw = rng.random((per_side, per_side))
    x = ((ii + jitter[0]) * TREE_SPACING).ravel()
    z = ((jj + jitter[1]) * TREE_SPACING).ravel()
    ix, iz = terrain.cell_of(x, z)
    h = terrain.heights[ix, iz]
    keep = keep_draw.ravel() < tree_density(h)
    positions = np.column_stack([x[keep], h[keep], z[keep]])
    cells = np.column_stack([ix[keep], iz[keep]])
    return ForestMap(positions=positions, cells=cells)


@dataclass
class Scenario:
    config: ScenarioConfig
    terrain: TerrainGrid
    forest: ForestMap


def build_scenario(config):
    terrain = generate_terrain(config)
    return Scenario(config=config, terrain=terrain, forest=place_forest(terrain, config))


def export_scenario(scenario, path):
    payload = {
        "format_version": SCENARIO_FORMAT_VERSION,
        "seed": int(scenario.config.seed),
        "difficulty": int(scenario.config.difficulty),
        "grid_size": int(scenario.config.grid_size),
        "world_extent": float(scenario.config.world_extent),
        "terrain_sha256": scenario.terrain.checksum(),
        "tree_count": len(scenario.forest),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
    return payload


def import_scenario(path):
    """Rebuild a scenario from an exported pin file, verifying its checksum."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format_version") != SCENARIO_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported scenario format {payload.get('format_version')!r}")
    config = ScenarioConfig(
        seed=payload["seed"],
        difficulty=payload["difficulty"],
        grid_size=payload["grid_size"],
        world_extent=payload["world_extent"],
    )
    scenario = build_scenario(config)
    if scenario.terrain.checksum() != payload["terrain_sha256"]:
        raise ConfigurationError("terrain checksum mismatch; generator output changed since export")
    return scenario
