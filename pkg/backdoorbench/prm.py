"""
Probabilistic roadmap demonstrations
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
import torch
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .formula import avoid
from .planners import PlanningError, PlanTask
from .predicates import ObstacleField
from .sdf import SignedDistanceField, compute_sdf
from .semantics import robustness
from .trajectory import Trajectory, resample_arclength
from .world import GridMap, path_free, sample_free_point, segment_free

logger = logging.getLogger('BackdoorBench.PRM')


class PRMPlanner:
    """
    Roadmap over free-space samples whose SDF clearance is at least `clearance`.

    Nodes are connected to their k nearest neighbors when the straight segment
    is collision-free and keeps the clearance margin.
    """

    def __init__(self, grid_map: GridMap, rng: np.random.Generator, n_samples: int = 200,
                 k: int = 8, clearance: float = 0.2, compress_path: bool = True,
                 field: Optional[SignedDistanceField] = None):
        self.grid_map = grid_map
        self.rng = rng
        self.k = k
        self.clearance = clearance
        self.compress_path = compress_path
        self.field = field or compute_sdf(grid_map)
        self.nodes = self._sample_nodes(n_samples)
        self.kdtree = cKDTree(self.nodes) if len(self.nodes) else None
        self.adjacency = self._connect()

    def _sdf(self, points: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.field.interpolate(torch.as_tensor(points, dtype=torch.float64)).numpy()

    def _sample_nodes(self, n_samples: int) -> np.ndarray:
        nodes = []
        attempts = 0
        while len(nodes) < n_samples and attempts < 20 * n_samples:
            attempts += 1
            p = sample_free_point(self.grid_map, self.rng)
            if self._sdf(p[None, :])[0] >= self.clearance:
                nodes.append(p)
        if len(nodes) < n_samples:
            logger.debug(f"PRM sampled {len(nodes)}/{n_samples} nodes with clearance {self.clearance}")
        return np.array(nodes).reshape(-1, 2)

    def edge_free(self, p: np.ndarray, q: np.ndarray, clearance: Optional[float] = None) -> bool:
        if not segment_free(self.grid_map, p, q):
            return False
        margin = self.clearance if clearance is None else clearance
        if margin <= 0:
            return True
        n = int(np.ceil(np.linalg.norm(q - p) / (self.grid_map.resolution / 2))) + 2
        pts = p + np.linspace(0.0, 1.0, n)[:, None] * (q - p)
        return bool(np.all(self._sdf(pts) >= margin))

    def _connect(self):
        n = len(self.nodes)
        adjacency = lil_matrix((n + 2, n + 2))
        if n < 2:
            return adjacency
        k = min(self.k + 1, n)
        dists, idxs = self.kdtree.query(self.nodes, k=k)
        for i in range(n):
            for d, j in zip(np.atleast_1d(dists[i])[1:], np.atleast_1d(idxs[i])[1:]):
                if adjacency[i, j] or not self.edge_free(self.nodes[i], self.nodes[j]):
                    continue
                adjacency[i, j] = adjacency[j, i] = max(float(d), 1e-12)
        return adjacency

    def _shortcut(self, path: np.ndarray) -> np.ndarray:
        """Greedy: from each kept waypoint jump to the farthest visible one"""
        out = [path[0]]
        i = 0
        while i < len(path) - 1:
            j = len(path) - 1
            while j > i + 1 and not self.edge_free(path[i], path[j], clearance=0.0):
                j -= 1
            out.append(path[j])
            i = j
        return np.array(out)

    def plan(self, start: np.ndarray, goal: np.ndarray) -> Optional[np.ndarray]:
        """Waypoints start..goal, or None when the roadmap does not connect them"""
        start = np.asarray(start, dtype=np.float64)
        goal = np.asarray(goal, dtype=np.float64)
        if self.edge_free(start, goal, clearance=0.0):
            return np.array([start, goal])
        n = len(self.nodes)
        if n == 0:
            return None

        graph = self.adjacency.copy()
        s_idx, g_idx = n, n + 1
        k = min(self.k, n)
        for idx, p in ((s_idx, start), (g_idx, goal)):
            dists, nbrs = self.kdtree.query(p, k=k)
            for d, j in zip(np.atleast_1d(dists), np.atleast_1d(nbrs)):
                if self.edge_free(p, self.nodes[j], clearance=0.0):
                    graph[idx, j] = graph[j, idx] = max(float(d), 1e-12)

        dist, pred = dijkstra(graph.tocsr(), directed=False, indices=s_idx, return_predecessors=True)
        if not np.isfinite(dist[g_idx]):
            return None
        order = [g_idx]
        while order[-1] != s_idx:
            order.append(int(pred[order[-1]]))
        order.reverse()
        points = np.vstack([self.nodes, start[None, :], goal[None, :]])
        path = points[order]
        return self._shortcut(path) if self.compress_path else path


def prm_demos(grid_map: GridMap, n_paths: int, seed: int, horizon: int = 31,
              n_samples: int = 200, k: int = 8, clearance: float = 0.2,
              min_separation: float = 1.0, max_retries: int = 50) -> List[Tuple[PlanTask, Trajectory]]:
    """Collision-free demonstrations between uniform free endpoints, T+1 states each"""
    if n_paths <= 0:
        return []
    rng = np.random.default_rng(seed)
    field = compute_sdf(grid_map)
    planner = PRMPlanner(grid_map, rng, n_samples=n_samples, k=k, clearance=clearance, field=field)
    obstacle_free = avoid(0, horizon, ObstacleField(field))

    demos = []
    for i in range(n_paths):
        for attempt in range(max_retries):
            s0 = sample_free_point(grid_map, rng)
            goal = sample_free_point(grid_map, rng)
            if np.linalg.norm(goal - s0) < min_separation:
                continue
            waypoints = planner.plan(s0, goal)
            if waypoints is None:
                logger.debug(f"Map {grid_map.map_id}: roadmap does not connect pair {i}, resampling")
                continue
            states = resample_arclength(waypoints, horizon + 1)
            if not path_free(grid_map, states) or robustness(obstacle_free, states) <= 0:
                continue
            demos.append((PlanTask(grid_map, s0, goal, horizon), Trajectory(states)))
            break
        else:
            raise PlanningError(
                f"Map {grid_map.map_id}: no valid demonstration for pair {i} after {max_retries} retries"
            )
    return demos
