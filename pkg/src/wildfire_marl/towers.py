"""Lookout-tower grid, nearest-neighbour graph and local sensing."""
from dataclasses import dataclass

import numpy as np

from .dynamics import TEMP_MAX, TEMP_MIN
from .scenario import WORLD_EXTENT, ConfigurationError

N_TOWERS = 9
N_NEIGHBORS = 3
OBS_WIDTH = 7
NO_FIRE = np.zeros(3)
# support at one tower can reach the whole grid's budget
PREP_SCALE = float(N_TOWERS)


@dataclass
class TowerGrid:
    positions: np.ndarray
    observation_radius: float

    @property
    def ids(self):
        return range(len(self.positions))

    def __len__(self):
        return len(self.positions)

    def horizontal_distance(self, tower, points):
        d = np.asarray(points)[..., [0, 2]] - self.positions[tower, [0, 2]]
        return np.linalg.norm(d, axis=-1)


def make_tower_grid(terrain=None, world_extent=WORLD_EXTENT):
    """Fixed 3x3 grid; tower id = 3 * row + col, with rows along z and columns along x."""
    spacing = world_extent / 3.0
    coords = spacing * (np.arange(3) + 0.5)
    positions = []
    for row in range(3):
        for col in range(3):
            x, z = coords[col], coords[row]
            y = float(terrain.height_at(x, z)) if terrain is not None else 0.0
            positions.append((x, y, z))
    return TowerGrid(positions=np.array(positions), observation_radius=spacing / np.sqrt(2.0))


def build_neighborhoods(positions, n=N_NEIGHBORS):
    """Directed n-nearest-neighbour lists on the horizontal plane.

    Distance ties resolve toward the lower tower id.
    """
    positions = np.asarray(positions, dtype=np.float64)
    count = len(positions)
    if count < n + 1:
        raise ConfigurationError(f"need at least {n + 1} towers for {n} neighbours, got {count}")
    horiz = positions[:, [0, 2]] if positions.shape[1] == 3 else positions
    graph = {}
    for v in range(count):
        # rounding makes grid-symmetric distances compare equal
        dist = np.round(np.linalg.norm(horiz - horiz[v], axis=1), 6)
        others = [u for u in range(count) if u != v]
        others.sort(key=lambda u: (dist[u], u))
        graph[v] = others[:n]
    return graph


def undirected_neighbors(graph):
    """Symmetric closure of a directed neighbour graph, as sets."""
    out = {v: set(us) for v, us in graph.items()}
    for v, us in graph.items():
        for u in us:
            out[u].add(v)
    return out


def closest_observed_fire(towers, tower, fire_positions, burning):
    """Position and distance of the nearest burning tree inside the tower's region.

    Returns ``(None, None)`` when no burning tree is within the (inclusive)
    observation radius. Ties go to the lower tree index.
    """
    burning = np.sort(np.asarray(burning, dtype=np.int64))
    if len(burning) == 0:
        return None, None
    d = towers.horizontal_distance(tower, fire_positions[burning])
    inside = d <= towers.observation_radius
    if not inside.any():
        return None, None
    idx = np.flatnonzero(inside)
    best = idx[np.argmin(d[idx])]
    return fire_positions[burning[best]].copy(), float(d[best])


@dataclass(frozen=True)
class LocalObservation:
    cof_pos: np.ndarray
    fire_visible: bool
    temp: float
    hum: float
    prep: float
    oc: float

    def as_tuple(self):
        return (*map(float, self.cof_pos), self.temp, self.hum, self.prep, self.oc)

    def features(self, world_extent=WORLD_EXTENT):
        """Normalised 7-vector; the zero position doubles as the no-fire marker."""
        pos = np.asarray(self.cof_pos, dtype=np.float64) / world_extent if self.fire_visible else NO_FIRE
        return np.array([
            pos[0], pos[1], pos[2],
            (self.temp - TEMP_MIN) / (TEMP_MAX - TEMP_MIN),
            self.hum,
            self.prep / PREP_SCALE,
            self.oc,
        ])


def observe_local(tower, world):
    """Sensor reading of one tower from the shared world state."""
    cell = world.tower_cells[tower]
    temp, hum, oc = world.weather.at_cells(cell)
    pos, _ = closest_observed_fire(world.towers, tower, world.forest.positions, world.fire.burning)
    visible = pos is not None
    return LocalObservation(
        cof_pos=pos if visible else NO_FIRE.copy(),
        fire_visible=visible,
        temp=float(temp),
        hum=float(hum),
        prep=world.ledger.support_value(tower),
        oc=float(oc),
    )
