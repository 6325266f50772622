"""
Gradient solver: find a trajectory from s0 whose robustness is positive
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import torch

from .formula import Formula, NodeKind
from .instantiate import instantiate
from .predicates import ObstacleField
from .semantics import Mode, SemanticsConfig, robustness, robustness_tensor
from .trajectory import Trajectory, fit_horizon
from .world import GridMap, collision_free, path_free

logger = logging.getLogger('BackdoorBench.Solver')


class SolverError(RuntimeError):
    """No satisfying trajectory within the restart budget"""


@dataclass
class SolverOptions:
    steps: int = 400
    lr: float = 0.05
    restarts: int = 10
    jitter: float = 0.3
    margin: float = 0.0
    max_step: float = 0.6
    epsilon: float = 5.0
    check_every: int = 10
    seed: int = 0

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> 'SolverOptions':
        section = config.get('attack', {}).get('solver', {})
        values = dict(
            steps=int(section.get('steps', 400)),
            lr=float(section.get('lr', 0.05)),
            restarts=int(section.get('restarts', 10)),
            jitter=float(section.get('jitter', 0.3)),
            margin=float(section.get('margin', 0.0)),
            max_step=float(config.get('planning', {}).get('max_step', 0.6)),
            epsilon=float(config.get('semantics', {}).get('epsilon', 5.0)),
            seed=int(config.get('project', {}).get('seed', 0)),
        )
        values.update(overrides)
        return cls(**values)


def region_target(formula: Formula) -> Optional[np.ndarray]:
    """Center of the first reach/stay region, if any"""
    for node in formula.walk():
        if node.kind in (NodeKind.REACH, NodeKind.STAY) and not isinstance(node.predicate, ObstacleField):
            center = node.predicate.center()
            if center is not None:
                return np.asarray(center, dtype=np.float64)
    return None


def clamp_steps(states: torch.Tensor, max_step: float, extent) -> torch.Tensor:
    """Sequentially limit every displacement to max_step and keep states inside the map"""
    upper = torch.as_tensor(np.asarray(extent, dtype=np.float64) - 1e-6)
    out = [states[0]]
    for t in range(1, states.shape[0]):
        d = states[t] - out[-1]
        norm = torch.linalg.norm(d)
        if norm > max_step:
            d = d * (max_step / norm)
        out.append(torch.minimum(torch.clamp(out[-1] + d, min=0.0), upper))
    return torch.stack(out)


def initial_trajectory(formula: Formula, s0: np.ndarray, horizon: int,
                       demo: Optional[np.ndarray] = None) -> np.ndarray:
    """Straight line s0 -> region center, else the demo path, else standing still"""
    target = region_target(formula)
    if target is not None:
        return np.linspace(s0, target, horizon + 1)
    if demo is not None:
        states = fit_horizon(np.asarray(demo, dtype=np.float64), horizon)
        states[0] = s0
        return states
    return np.repeat(s0[None, :], horizon + 1, axis=0)


def _accepted(formula: Formula, grid_map: GridMap, states: np.ndarray, margin: float) -> bool:
    return robustness(formula, states) > margin and path_free(grid_map, states)


def solve_trajectory(formula: Formula, grid_map: GridMap, s0, options: Optional[SolverOptions] = None,
                     horizon: Optional[int] = None, demo: Optional[np.ndarray] = None) -> Trajectory:
    """Adam ascent on smoothed robustness over s_1..s_T with s0 pinned.

    Restart 0 starts from the initial guess, later restarts add Gaussian jitter.
    Acceptance is always checked with definitional robustness and the map.
    """
    options = options or SolverOptions()
    if not formula.is_instantiated():
        formula = instantiate(formula, grid_map)
    s0 = np.asarray(s0, dtype=np.float64)
    if not collision_free(grid_map, s0):
        raise SolverError(f"start {s0.tolist()} is not collision-free")
    horizon = formula.max_time() if horizon is None else horizon
    smoothed = SemanticsConfig(options.epsilon, mode=Mode.SMOOTHED)
    rng = np.random.default_rng(options.seed)
    extent = np.array(grid_map.extent)
    start = torch.as_tensor(s0).reshape(1, 2)

    base = initial_trajectory(formula, s0, horizon, demo)
    with torch.no_grad():
        base = clamp_steps(torch.as_tensor(base), options.max_step, extent).numpy()
    if _accepted(formula, grid_map, base, options.margin):
        logger.debug("Initial trajectory already satisfies the formula")
        return Trajectory(base)

    best = -np.inf
    for restart in range(options.restarts):
        init = base[1:].copy()
        if restart:
            init = init + rng.normal(0.0, options.jitter, size=init.shape)
        free_states = torch.tensor(np.clip(init, 0.0, extent - 1e-6), requires_grad=True)
        optimizer = torch.optim.Adam([free_states], lr=options.lr)
        for step in range(options.steps):
            optimizer.zero_grad()
            states = torch.cat([start, free_states], dim=0)
            loss = -robustness_tensor(formula, states, smoothed)
            if not torch.isfinite(loss):
                logger.debug(f"Restart {restart}: non-finite objective at step {step}")
                break
            loss.backward()
            optimizer.step()
            with torch.no_grad():
                free_states.copy_(clamp_steps(torch.cat([start, free_states]), options.max_step, extent)[1:])
            if (step + 1) % options.check_every == 0 or step == options.steps - 1:
                candidate = torch.cat([start, free_states.detach()]).numpy().copy()
                value = robustness(formula, candidate)
                best = max(best, value)
                if value > options.margin and path_free(grid_map, candidate):
                    logger.debug(f"Solved after restart {restart}, step {step + 1}: rho={value:.4f}")
                    return Trajectory(candidate)
        logger.debug(f"Restart {restart} ended without a satisfying trajectory")

    raise SolverError(f"no satisfying trajectory after {options.restarts} restarts (best rho {best:.4f})")
