"""
Bind predicate templates to a concrete map
"""

import logging
from typing import Optional, Sequence

import numpy as np

from .formula import Formula, map_predicates
from .predicates import Around, Ball, Behind, ObstacleField, Obstacles, Predicate
from .sdf import compute_sdf
from .world import GridMap, collision_free

logger = logging.getLogger('BackdoorBench.Instantiate')

# Cells between the north face of an object and the Behind center
NORTH_MARGIN_CELLS = 2


class InstantiationError(ValueError):
    """Template cannot be resolved on the given map"""


def nearest_free_position(grid_map: GridMap, p: Sequence[float]) -> np.ndarray:
    """Ring search outward from the cell containing p.

    Rings are Chebyshev shells around the start cell. Once a free cell is
    found the search continues while a closer cell center may still exist,
    so the returned center is the Euclidean-nearest free one.
    """
    p = np.asarray(p, dtype=np.float64)
    if collision_free(grid_map, p):
        return p.copy()

    res = grid_map.resolution
    row0, col0 = grid_map.cell_of(p)
    free = grid_map.free
    best: Optional[np.ndarray] = None
    best_dist = np.inf
    max_ring = max(grid_map.height, grid_map.width)

    for ring in range(0, max_ring + 1):
        # every cell of this ring is at least (ring - 0.5) cells away from p
        if best is not None and (ring - 0.5) * res > best_dist:
            break
        rows = range(max(row0 - ring, 0), min(row0 + ring, grid_map.height - 1) + 1)
        cols = range(max(col0 - ring, 0), min(col0 + ring, grid_map.width - 1) + 1)
        for r in rows:
            for c in cols:
                if max(abs(r - row0), abs(c - col0)) != ring or not free[r, c]:
                    continue
                center = grid_map.cell_center(r, c)
                dist = float(np.linalg.norm(center - p))
                if dist < best_dist:
                    best, best_dist = center, dist

    if best is None:
        raise InstantiationError(f"no collision-free cell found around {p.tolist()}")
    return best


def obstacle_clearance(grid_map: GridMap, points) -> np.ndarray:
    """Exact distance from each point to the union of occupied cell squares (0 inside, inf on open maps)"""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    blocked = grid_map.cell_centers()[grid_map.occupancy]
    if len(blocked) == 0:
        return np.full(len(pts), np.inf)
    half = grid_map.resolution / 2.0
    out = np.empty(len(pts))
    for start in range(0, len(pts), 256):
        gap = np.abs(pts[start:start + 256, None, :] - blocked[None, :, :]) - half
        out[start:start + 256] = np.linalg.norm(np.maximum(gap, 0.0), axis=-1).min(axis=1)
    return out


def nearest_clear_position(grid_map: GridMap, p: Sequence[float], radius: float,
                           clearance: Optional[np.ndarray] = None) -> np.ndarray:
    """p itself if a ball of this radius around it is obstacle-free, else the nearest such cell center.

    clearance is the (H, W) obstacle_clearance of the cell centers, reusable across calls.
    Without any cell clear enough the free cell with the largest clearance is returned.
    """
    p = np.asarray(p, dtype=np.float64)
    if collision_free(grid_map, p) and obstacle_clearance(grid_map, p)[0] >= radius:
        return p.copy()
    if clearance is None:
        clearance = obstacle_clearance(grid_map, grid_map.cell_centers().reshape(-1, 2))
    clearance = np.asarray(clearance).reshape(-1)
    centers = grid_map.cell_centers().reshape(-1, 2)
    free = grid_map.free.reshape(-1)
    if not free.any():
        raise InstantiationError(f"no collision-free cell found around {p.tolist()}")
    ok = free & (clearance >= radius)
    if not ok.any():
        best = int(np.argmax(np.where(free, clearance, -np.inf)))
        logger.warning(f"no cell clears radius {radius}; using max clearance {clearance[best]:.3f}")
        return centers[best].copy()
    dist = np.where(ok, np.linalg.norm(centers - p, axis=1), np.inf)
    return centers[int(np.argmin(dist))].copy()


def behind_position(grid_map: GridMap, obj_id: int) -> np.ndarray:
    """Object centroid moved past its north face (towards -y)"""
    obs = grid_map.obstacle(obj_id)
    if obs is None:
        known = [o.id for o in grid_map.obstacles]
        raise InstantiationError(f"unknown object id {obj_id}; map has {known}")
    res = grid_map.resolution
    cx = (obs.x0 + obs.x1 + 1) / 2.0 * res
    cy = (obs.y0 + obs.y1 + 1) / 2.0 * res
    half_height = (obs.y1 - obs.y0 + 1) / 2.0 * res
    return np.array([cx, cy - (half_height + NORTH_MARGIN_CELLS * res)])


class Instantiator:
    """Resolves templates on one map; the map SDF is computed once"""

    def __init__(self, grid_map: GridMap):
        self.grid_map = grid_map
        self._obstacle_field: Optional[ObstacleField] = None
        self._clearance: Optional[np.ndarray] = None

    @property
    def obstacle_field(self) -> ObstacleField:
        if self._obstacle_field is None:
            self._obstacle_field = ObstacleField(compute_sdf(self.grid_map))
        return self._obstacle_field

    @property
    def clearance(self) -> np.ndarray:
        """Obstacle clearance of every cell center, (H, W)"""
        if self._clearance is None:
            centers = self.grid_map.cell_centers().reshape(-1, 2)
            self._clearance = obstacle_clearance(self.grid_map, centers).reshape(self.grid_map.shape)
        return self._clearance

    def resolve(self, pred: Predicate) -> Predicate:
        if not pred.is_template:
            return pred
        if isinstance(pred, Obstacles):
            return self.obstacle_field
        if isinstance(pred, Around):
            beta = nearest_clear_position(self.grid_map, (pred.x, pred.y), pred.r, self.clearance)
            return Ball(float(beta[0]), float(beta[1]), pred.r)
        if isinstance(pred, Behind):
            beta = behind_position(self.grid_map, pred.obj)
            if not collision_free(self.grid_map, beta) or obstacle_clearance(self.grid_map, beta)[0] < pred.r:
                # north face at the map border or against another obstacle
                logger.debug(f"behind({pred.obj}) is not clear at {beta.tolist()}, repairing")
                clamped = np.clip(beta, 0.0, np.array(self.grid_map.extent) - 1e-9)
                beta = nearest_clear_position(self.grid_map, clamped, pred.r, self.clearance)
            return Ball(float(beta[0]), float(beta[1]), pred.r)
        raise InstantiationError(f"no instantiation rule for {pred.to_text()}")

    def __call__(self, formula: Formula) -> Formula:
        return map_predicates(formula, self.resolve)


def instantiate(formula: Formula, grid_map: GridMap) -> Formula:
    """Replace every template predicate by its concrete counterpart on grid_map"""
    return Instantiator(grid_map)(formula)
