import numpy as np
import pytest
import torch
from scipy import ndimage

from backdoorbench.builtin_specs import misguide, obstacle_avoidance, trap
from backdoorbench.formula import reach
from backdoorbench.predicates import Ball
from backdoorbench.semantics import robustness
from backdoorbench.solver import (SolverError, SolverOptions, clamp_steps, initial_trajectory, region_target,
                                  solve_trajectory)
from backdoorbench.world import Obstacle, map_from_obstacles, path_free


def test_start_inside_region_is_kept(open_map):
    c = np.array([4.5, 4.5])
    formula = reach(0, 5, Ball(c[0], c[1], 0.5)) & obstacle_avoidance(5)
    traj = solve_trajectory(formula, open_map, c)
    assert traj.horizon == 5
    np.testing.assert_allclose(traj.states, np.tile(c, (6, 1)))


def test_trap_is_solved(open_map):
    formula = trap(7, Ball(5.0, 5.0, 1.0), 4) & obstacle_avoidance(7)
    options = SolverOptions(seed=0)
    traj = solve_trajectory(formula, open_map, (3.0, 3.0), options)
    states = traj.states
    assert robustness(formula.children[0], states) > 0
    assert path_free(open_map, states)
    np.testing.assert_array_equal(states[0], [3.0, 3.0])
    assert np.all(np.linalg.norm(np.diff(states, axis=0), axis=1) <= options.max_step + 1e-9)


def test_misguide_beside_a_wall(walled_map):
    formula = misguide(8, Ball(1.5, 6.5, 0.5)) & obstacle_avoidance(8)
    traj = solve_trajectory(formula, walled_map, (2.5, 2.5), SolverOptions(seed=1))
    assert robustness(formula, traj.states) > 0
    assert path_free(walled_map, traj.states)


def test_unreachable_region_exhausts_budget():
    grid = map_from_obstacles(8, 8, [Obstacle(0, 5, 5, 7, 5), Obstacle(1, 5, 6, 5, 7)], resolution=1.0)
    start, target = (1.5, 1.5), (6.5, 6.5)
    labels, _ = ndimage.label(grid.free)
    assert labels[grid.cell_of(start)] != labels[grid.cell_of(target)]
    formula = misguide(12, Ball(target[0], target[1], 0.4)) & obstacle_avoidance(12)
    with pytest.raises(SolverError):
        solve_trajectory(formula, grid, start, SolverOptions(steps=30, restarts=2))


def test_start_in_collision(walled_map):
    with pytest.raises(SolverError):
        solve_trajectory(reach(0, 3, Ball(1.0, 1.0, 0.5)), walled_map, (4.5, 2.5))


def test_clamp_steps():
    states = torch.tensor([[0.0, 0.0], [3.0, 0.0], [3.0, 3.0]], dtype=torch.float64)
    out = clamp_steps(states, 1.0, (8.0, 8.0))
    np.testing.assert_allclose(out[1].numpy(), [1.0, 0.0])
    steps = torch.linalg.norm(out[1:] - out[:-1], dim=1)
    assert torch.all(steps <= 1.0 + 1e-12)
    inside = clamp_steps(torch.tensor([[0.5, 0.5], [-1.0, 0.5]], dtype=torch.float64), 5.0, (8.0, 8.0))
    np.testing.assert_allclose(inside[1].numpy(), [0.0, 0.5])


def test_initial_trajectory_choices():
    s0 = np.array([1.0, 1.0])
    line = initial_trajectory(reach(0, 4, Ball(5.0, 1.0, 0.5)), s0, 4)
    np.testing.assert_allclose(line[:, 0], [1.0, 2.0, 3.0, 4.0, 5.0])
    demo = np.linspace([0.0, 0.0], [2.0, 2.0], 3)
    guess = initial_trajectory(obstacle_avoidance(4), s0, 4, demo)
    assert guess.shape == (5, 2)
    np.testing.assert_array_equal(guess[0], s0)
    still = initial_trajectory(obstacle_avoidance(4), s0, 4)
    np.testing.assert_array_equal(still, np.tile(s0, (5, 1)))
    assert region_target(obstacle_avoidance(4)) is None


def test_options_from_config():
    config = {'attack': {'solver': {'steps': 50, 'restarts': 3}}, 'planning': {'max_step': 0.4},
              'semantics': {'epsilon': 8.0}, 'project': {'seed': 2}}
    options = SolverOptions.from_config(config, lr=0.2)
    assert (options.steps, options.restarts, options.max_step, options.epsilon, options.seed, options.lr) == \
        (50, 3, 0.4, 8.0, 2, 0.2)
