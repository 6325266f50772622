"""
Grayscale occupancy worlds: maps, labeled obstacles, random synthesis and
collision queries
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

logger = logging.getLogger('BackdoorBench.World')

FREE = 255
OBSTACLE = 0
DEFAULT_SIZE = 32
DEFAULT_EXTENT = 10.0


class MapError(ValueError):
    """Invalid map contents or query"""


class MapSynthesisError(MapError):
    """Random map generation could not satisfy its constraints"""


@dataclass(frozen=True)
class Obstacle:
    """Labeled axis-aligned rectangle, inclusive cell bounds (x = column, y = row)"""

    id: int
    x0: int
    y0: int
    x1: int
    y1: int

    def cells(self) -> Tuple[slice, slice]:
        return slice(self.y0, self.y1 + 1), slice(self.x0, self.x1 + 1)

    def to_dict(self):
        return {'id': self.id, 'x0': self.x0, 'y0': self.y0, 'x1': self.x1, 'y1': self.y1}

    @classmethod
    def from_dict(cls, data) -> 'Obstacle':
        return cls(int(data['id']), int(data['x0']), int(data['y0']),
                   int(data['x1']), int(data['y1']))


@dataclass(frozen=True, eq=False)
class GridMap:
    """Row-major grayscale world: 0 is obstacle black, 255 is free white"""

    intensity: np.ndarray
    resolution: float = DEFAULT_EXTENT / DEFAULT_SIZE
    obstacle_threshold: int = 128
    obstacles: Tuple[Obstacle, ...] = field(default_factory=tuple)
    map_id: str = ''

    def __post_init__(self):
        intensity = np.asarray(self.intensity)
        if intensity.ndim != 2:
            raise MapError(f"intensity must be 2-D, got shape {intensity.shape}")
        if intensity.shape[0] < 4 or intensity.shape[1] < 4:
            raise MapError(f"map must be at least 4x4, got {intensity.shape}")
        if self.resolution <= 0:
            raise MapError("resolution must be positive")
        if intensity.dtype != np.uint8:
            if np.any(intensity < 0) or np.any(intensity > 255):
                raise MapError("intensity must be bytes 0..255")
            intensity = intensity.astype(np.uint8)
        intensity = intensity.copy()
        intensity.setflags(write=False)
        object.__setattr__(self, 'intensity', intensity)
        object.__setattr__(self, 'obstacles', tuple(self.obstacles))

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.intensity.shape

    @property
    def extent(self) -> Tuple[float, float]:
        """(x extent, y extent) in meters"""
        return self.width * self.resolution, self.height * self.resolution

    @property
    def occupancy(self) -> np.ndarray:
        """Boolean obstacle grid, pure function of intensity and threshold"""
        return self.intensity < self.obstacle_threshold

    @property
    def free(self) -> np.ndarray:
        return ~self.occupancy

    def cell_of(self, p: Sequence[float]) -> Tuple[int, int]:
        """(row, col) of the cell containing p, clamped to the map"""
        col = int(np.floor(p[0] / self.resolution))
        row = int(np.floor(p[1] / self.resolution))
        return (min(max(row, 0), self.height - 1), min(max(col, 0), self.width - 1))

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return np.array([(col + 0.5) * self.resolution, (row + 0.5) * self.resolution])

    def cell_centers(self) -> np.ndarray:
        """(H, W, 2) array of cell-center positions"""
        cols, rows = np.meshgrid(np.arange(self.width), np.arange(self.height))
        return np.stack([(cols + 0.5) * self.resolution, (rows + 0.5) * self.resolution], axis=-1)

    def in_bounds(self, p: Sequence[float]) -> bool:
        w, h = self.extent
        return 0.0 <= p[0] < w and 0.0 <= p[1] < h

    def obstacle(self, obstacle_id: int) -> Optional[Obstacle]:
        for obs in self.obstacles:
            if obs.id == obstacle_id:
                return obs
        return None

    def with_intensity(self, intensity: np.ndarray, map_id: Optional[str] = None) -> 'GridMap':
        return replace(self, intensity=intensity, map_id=self.map_id if map_id is None else map_id)

    def __eq__(self, other):
        return (isinstance(other, GridMap)
                and self.resolution == other.resolution
                and self.obstacle_threshold == other.obstacle_threshold
                and self.obstacles == other.obstacles
                and np.array_equal(self.intensity, other.intensity))


def empty_map(width: int = DEFAULT_SIZE, height: int = DEFAULT_SIZE,
              resolution: float = DEFAULT_EXTENT / DEFAULT_SIZE, map_id: str = '') -> GridMap:
    return GridMap(np.full((height, width), FREE, dtype=np.uint8), resolution, map_id=map_id)


def map_from_obstacles(width: int, height: int, obstacles: Sequence[Obstacle],
                       resolution: float = DEFAULT_EXTENT / DEFAULT_SIZE, map_id: str = '') -> GridMap:
    intensity = np.full((height, width), FREE, dtype=np.uint8)
    for obs in obstacles:
        intensity[obs.cells()] = OBSTACLE
    return GridMap(intensity, resolution, obstacles=tuple(obstacles), map_id=map_id)


def free_space_connected(grid_map: GridMap) -> bool:
    """Free cells are nonempty and form one 4-connected component"""
    _, n_components = ndimage.label(grid_map.free)
    return n_components == 1


def synth_map(seed: int,
              n_obstacles: int,
              size_range: Tuple[int, int] = (3, 8),
              width: int = DEFAULT_SIZE,
              height: int = DEFAULT_SIZE,
              resolution: float = DEFAULT_EXTENT / DEFAULT_SIZE,
              max_retries: int = 100,
              map_id: str = '') -> GridMap:
    """Random map of labeled rectangular obstacles with connected free space"""
    if n_obstacles < 0:
        raise MapSynthesisError("n_obstacles must be >= 0")
    lo, hi = int(size_range[0]), int(size_range[1])
    if lo < 1 or hi < lo:
        raise MapSynthesisError(f"invalid size_range {size_range}")

    rng = np.random.default_rng(seed)
    for attempt in range(max_retries):
        obstacles = []
        for idx in range(n_obstacles):
            w = int(rng.integers(lo, hi + 1))
            h = int(rng.integers(lo, hi + 1))
            w, h = min(w, width), min(h, height)
            x0 = int(rng.integers(0, width - w + 1))
            y0 = int(rng.integers(0, height - h + 1))
            obstacles.append(Obstacle(idx, x0, y0, x0 + w - 1, y0 + h - 1))
        candidate = map_from_obstacles(width, height, obstacles, resolution, map_id=map_id)
        if free_space_connected(candidate):
            if attempt:
                logger.debug(f"Map seed {seed}: connected after {attempt + 1} attempts")
            return candidate

    raise MapSynthesisError(
        f"Could not synthesize a connected map (seed={seed}, n_obstacles={n_obstacles}) "
        f"within {max_retries} retries"
    )


def collision_free(grid_map: GridMap, p: Sequence[float]) -> bool:
    """Point check against the binary occupancy; outside the map is a collision"""
    if not grid_map.in_bounds(p):
        return False
    row, col = grid_map.cell_of(p)
    return not grid_map.occupancy[row, col]


def segment_free(grid_map: GridMap, p: Sequence[float], q: Sequence[float]) -> bool:
    """Supersampled segment check at spacing no larger than resolution / 2"""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    dist = float(np.linalg.norm(q - p))
    n = int(np.ceil(dist / (grid_map.resolution / 2.0))) + 1
    for s in np.linspace(0.0, 1.0, max(n, 2)):
        if not collision_free(grid_map, p + s * (q - p)):
            return False
    return True


def path_free(grid_map: GridMap, states: np.ndarray) -> bool:
    states = np.asarray(states)
    if len(states) == 1:
        return collision_free(grid_map, states[0])
    return all(segment_free(grid_map, a, b) for a, b in zip(states[:-1], states[1:]))


def sample_free_point(grid_map: GridMap, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the free region (uniform cell, then uniform within the cell)"""
    free_cells = np.argwhere(grid_map.free)
    if len(free_cells) == 0:
        raise MapError("map has no free cells")
    row, col = free_cells[int(rng.integers(len(free_cells)))]
    offset = rng.random(2)
    return np.array([(col + offset[0]) * grid_map.resolution, (row + offset[1]) * grid_map.resolution])
