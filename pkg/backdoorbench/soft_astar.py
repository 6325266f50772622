"""
Differentiable unroll of guided A*.

The search itself follows hard A* (same costs, same tie-breaking), while each
expansion also records the softmax-weighted barycenter of the open set under
-f / temperature. The returned path uses those barycenters, so its coordinates
carry gradients back to the guidance network.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch

from .models import PlannerNet, euclidean_grid, forward_guidance
from .planners import PlanningError, PlanTask, grid_neighbors

logger = logging.getLogger('BackdoorBench.SoftAStar')


@dataclass
class SoftUnrollResult:
    states: torch.Tensor
    expanded: List[Tuple[int, int]]
    success: bool

    @property
    def explore_steps(self) -> int:
        return len(self.expanded)


def soft_select(f: torch.Tensor, open_mask: torch.Tensor, centers: torch.Tensor,
                temperature: float) -> torch.Tensor:
    """Barycenter of open cell centers weighted by softmax(-f / temperature)"""
    scores = torch.where(open_mask, -f / temperature, torch.full_like(f, -math.inf))
    weights = torch.softmax(scores.reshape(-1), dim=0)
    return weights @ centers.reshape(-1, 2)


def soft_unroll_astar(model: PlannerNet, task: PlanTask, temperature: float = 0.1,
                      max_steps: Optional[int] = None, weight: float = 1.0,
                      connectivity: int = 8, map_input: Optional[torch.Tensor] = None) -> SoftUnrollResult:
    """Unroll guided A* and return a differentiable path [s0, soft cell positions.., g].

    map_input optionally replaces the network input with a (1, H, W) tensor in [0, 1]
    (e.g. a perturbed map); the search still runs on the occupancy of task.map.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    grid = task.map
    free = grid.free
    width = grid.width
    max_steps = max_steps or task.expansion_cap

    if map_input is None:
        guide = forward_guidance(model, grid, task.start, task.goal)[0]
    else:
        guide = forward_guidance(model, map_input, task.start, task.goal, grid.extent)[0]
    h = torch.as_tensor(euclidean_grid(grid, task.goal)) * (1.0 + weight * guide)
    h_fixed = h.detach().numpy()
    centers = torch.as_tensor(grid.cell_centers())

    start = grid.cell_of(task.start)
    goal = grid.cell_of(task.goal)
    g_cost = np.full(grid.shape, np.inf)
    g_cost[start] = 0.0
    open_mask = np.zeros(grid.shape, dtype=bool)
    open_mask[start] = True
    closed = np.zeros(grid.shape, dtype=bool)
    parent = {}
    soft_position = {}
    expanded: List[Tuple[int, int]] = []

    for _ in range(max_steps):
        if not open_mask.any():
            raise PlanningError(f"open set exhausted after {len(expanded)} expansions")
        f_fixed = np.where(open_mask, g_cost + h_fixed, np.inf)
        cell = divmod(int(np.argmin(f_fixed)), width)

        f = torch.as_tensor(np.where(open_mask, g_cost, 0.0)) + h
        soft_position[cell] = soft_select(f, torch.as_tensor(open_mask), centers, temperature)

        open_mask[cell] = False
        closed[cell] = True
        expanded.append(cell)
        if cell == goal:
            break
        for r, c, step in grid_neighbors(free, cell[0], cell[1], grid.resolution, connectivity):
            if closed[r, c]:
                continue
            ng = g_cost[cell] + step
            if ng < g_cost[r, c]:
                g_cost[r, c] = ng
                parent[(r, c)] = cell
                open_mask[r, c] = True

    last = expanded[-1]
    success = last == goal
    cells = [last]
    while cells[-1] in parent:
        cells.append(parent[cells[-1]])
    cells.reverse()

    start_t = torch.as_tensor(task.start).reshape(1, 2)
    parts = [start_t] + [soft_position[c].reshape(1, 2) for c in cells[1:-1]]
    if success:
        if len(cells) > 1 or not np.array_equal(task.start, task.goal):
            parts.append(torch.as_tensor(task.goal).reshape(1, 2))
    elif len(cells) > 1:
        parts.append(soft_position[cells[-1]].reshape(1, 2))
    if not success:
        logger.debug(f"Soft A* stopped after {len(expanded)} expansions without reaching the goal")
    return SoftUnrollResult(torch.cat(parts, dim=0), expanded, success)
