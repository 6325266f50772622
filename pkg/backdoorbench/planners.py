"""
Classical planners: grid A* with a pluggable heuristic and the sampler-driven
rollout planner with RRT repair
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .trajectory import Trajectory
from .world import GridMap, collision_free, path_free, sample_free_point, segment_free

logger = logging.getLogger('BackdoorBench.Planning')

DEFAULT_HORIZON = 31
DEFAULT_GOAL_TOL = 0.3
DEFAULT_MAX_STEP = 0.6

Heuristic = Union[Callable[[np.ndarray], float], np.ndarray]
Sampler = Callable[[np.ndarray], np.ndarray]

_MOVES_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))
_MOVES_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


class PlanningError(RuntimeError):
    """Invalid planning task or exhausted planning budget"""


@dataclass(frozen=True, eq=False)
class PlanTask:
    map: GridMap
    start: np.ndarray
    goal: np.ndarray
    horizon: int = DEFAULT_HORIZON
    max_length: float = 100.0
    goal_tol: float = DEFAULT_GOAL_TOL
    max_expansions: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'start', np.asarray(self.start, dtype=np.float64))
        object.__setattr__(self, 'goal', np.asarray(self.goal, dtype=np.float64))
        if self.horizon < 1:
            raise PlanningError(f"horizon must be >= 1, got {self.horizon}")
        if not self.max_length > 0:
            raise PlanningError("max_length must be > 0")
        if not collision_free(self.map, self.start):
            raise PlanningError(f"start {self.start.tolist()} is not collision-free")
        if not collision_free(self.map, self.goal):
            raise PlanningError(f"goal {self.goal.tolist()} is not collision-free")

    @property
    def expansion_cap(self) -> int:
        """Expansion budget shared by astar and soft_unroll_astar (W*H unless max_expansions is set).

        The sampler rollout counts draws instead and stops at draw_factor * horizon.
        """
        return self.max_expansions or self.map.width * self.map.height

    def with_map(self, grid_map: GridMap) -> 'PlanTask':
        return PlanTask(grid_map, self.start, self.goal, self.horizon, self.max_length,
                        self.goal_tol, self.max_expansions)


@dataclass(frozen=True)
class PlanResult:
    trajectory: Trajectory
    success: bool
    explore_steps: int
    cost: Optional[float] = None

    @property
    def path_length(self) -> float:
        return self.trajectory.length


def reached(task: PlanTask, states: np.ndarray) -> bool:
    """Endpoint within goal_tol and every segment collision-free"""
    states = np.asarray(states)
    return (float(np.linalg.norm(states[-1] - task.goal)) <= task.goal_tol
            and path_free(task.map, states))


# ---------------------------------------------------------------------------
# A*
# ---------------------------------------------------------------------------

def euclidean_heuristic(goal: Sequence[float]) -> Callable[[np.ndarray], float]:
    gx, gy = float(goal[0]), float(goal[1])

    def h(s: np.ndarray) -> float:
        dx, dy = s[0] - gx, s[1] - gy
        return math.sqrt(dx * dx + dy * dy)

    return h


def zero_heuristic(s: np.ndarray) -> float:
    return 0.0


def heuristic_grid(task: PlanTask, heuristic: Optional[Heuristic] = None) -> np.ndarray:
    """Heuristic evaluated on every cell center, shape (H, W)"""
    if heuristic is None:
        heuristic = euclidean_heuristic(task.goal)
    if isinstance(heuristic, np.ndarray):
        if heuristic.shape != task.map.shape:
            raise PlanningError(f"heuristic grid {heuristic.shape} does not match map {task.map.shape}")
        return heuristic.astype(np.float64)
    centers = task.map.cell_centers()
    out = np.empty(task.map.shape)
    for r in range(task.map.height):
        for c in range(task.map.width):
            out[r, c] = heuristic(centers[r, c])
    return out


def grid_neighbors(free: np.ndarray, row: int, col: int, resolution: float,
                   connectivity: int = 8) -> List[Tuple[int, int, float]]:
    """Free neighbors with step cost; diagonals may not cut obstacle corners"""
    h, w = free.shape
    out = []
    for dr, dc in (_MOVES_8 if connectivity == 8 else _MOVES_4):
        r, c = row + dr, col + dc
        if not (0 <= r < h and 0 <= c < w) or not free[r, c]:
            continue
        if dr and dc:
            if not (free[row + dr, col] and free[row, col + dc]):
                continue
            out.append((r, c, resolution * math.sqrt(2.0)))
        else:
            out.append((r, c, resolution))
    return out


def _cells_to_states(task: PlanTask, cells: List[Tuple[int, int]]) -> np.ndarray:
    """[s0, interior cell centers, g]"""
    states = [task.start]
    for r, c in cells[1:-1]:
        states.append(task.map.cell_center(r, c))
    if len(cells) > 1 or not np.array_equal(task.start, task.goal):
        states.append(task.goal)
    return np.array(states)


def astar(task: PlanTask, heuristic: Optional[Heuristic] = None, connectivity: int = 8) -> PlanResult:
    """Graph-search A* over cell centers.

    Ties on f are broken by the lower row-major cell index. explore_steps counts
    expansions including the goal.
    """
    grid = task.map
    free = grid.free
    h = heuristic_grid(task, heuristic)
    width = grid.width
    start = grid.cell_of(task.start)
    goal = grid.cell_of(task.goal)

    g_cost: Dict[Tuple[int, int], float] = {start: 0.0}
    parent: Dict[Tuple[int, int], Tuple[int, int]] = {}
    closed = set()
    heap = [(h[start], start[0] * width + start[1])]
    expansions = 0

    while heap and expansions < task.expansion_cap:
        _, flat = heapq.heappop(heap)
        cell = divmod(flat, width)
        if cell in closed:
            continue
        closed.add(cell)
        expansions += 1
        if cell == goal:
            cells = [cell]
            while cells[-1] in parent:
                cells.append(parent[cells[-1]])
            cells.reverse()
            states = _cells_to_states(task, cells)
            return PlanResult(Trajectory(states), reached(task, states), expansions, g_cost[goal])
        for r, c, step in grid_neighbors(free, cell[0], cell[1], grid.resolution, connectivity):
            nxt = (r, c)
            if nxt in closed:
                continue
            ng = g_cost[cell] + step
            if ng < g_cost.get(nxt, math.inf):
                g_cost[nxt] = ng
                parent[nxt] = cell
                heapq.heappush(heap, (ng + h[r, c], r * width + c))

    logger.debug(f"A* failed after {expansions} expansions")
    return PlanResult(Trajectory(task.start[None, :]), False, expansions, None)


# ---------------------------------------------------------------------------
# Sampler rollout with RRT repair
# ---------------------------------------------------------------------------

def steer(p: np.ndarray, q: np.ndarray, max_step: float) -> np.ndarray:
    d = q - p
    dist = float(np.linalg.norm(d))
    if dist <= max_step:
        return q.copy()
    return p + d * (max_step / dist)


def rollout_plan(task: PlanTask, sampler: Sampler,
                 rng: Optional[np.random.Generator] = None,
                 max_step: float = DEFAULT_MAX_STEP,
                 draw_factor: int = 4) -> PlanResult:
    """Query the sampler step by step; a rejected proposal triggers one RRT extension.

    The returned path is the tree branch ending at the last accepted node.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    grid = task.map
    nodes: List[np.ndarray] = [task.start.copy()]
    parents: List[int] = [-1]
    current = 0
    draws = 0
    cap = draw_factor * task.horizon

    for _ in range(task.horizon):
        if np.linalg.norm(nodes[current] - task.goal) <= task.goal_tol or draws >= cap:
            break
        state = nodes[current]
        proposal = np.asarray(sampler(state), dtype=np.float64)
        draws += 1
        if np.all(np.isfinite(proposal)) and segment_free(grid, state, proposal):
            nodes.append(proposal)
            parents.append(current)
            current = len(nodes) - 1
            continue

        # repair: one classical extension toward a uniform free sample
        target = sample_free_point(grid, rng)
        draws += 1
        tree = np.array(nodes)
        nearest = int(np.argmin(np.linalg.norm(tree - target, axis=1)))
        new = steer(tree[nearest], target, max_step)
        if segment_free(grid, tree[nearest], new):
            nodes.append(new)
            parents.append(nearest)
            current = len(nodes) - 1

    branch = []
    idx = current
    while idx >= 0:
        branch.append(nodes[idx])
        idx = parents[idx]
    states = np.array(branch[::-1])
    return PlanResult(Trajectory(states), reached(task, states), draws, None)
