import numpy as np
import pytest

from backdoorbench.formula import avoid, reach, stay
from backdoorbench.instantiate import (NORTH_MARGIN_CELLS, InstantiationError, Instantiator, behind_position,
                                       instantiate, nearest_clear_position, nearest_free_position,
                                       obstacle_clearance)
from backdoorbench.predicates import Around, Ball, Behind, ObstacleField, Obstacles
from backdoorbench.world import Obstacle, collision_free, map_from_obstacles


def nearest_free_by_scan(grid_map, p):
    centers = grid_map.cell_centers()[grid_map.free]
    return float(np.min(np.linalg.norm(centers - np.asarray(p), axis=1)))


def test_around_free_point_is_unchanged(open_map):
    pred = Instantiator(open_map).resolve(Around(3.0, 3.0, 0.5))
    assert pred == Ball(3.0, 3.0, 0.5)


def test_around_inside_obstacle_moves_to_nearest_free_cell():
    grid = map_from_obstacles(12, 12, [Obstacle(0, 3, 3, 8, 7)], resolution=1.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rng.uniform([3.0, 3.0], [9.0, 8.0])
        beta = nearest_free_position(grid, p)
        assert collision_free(grid, beta)
        assert np.linalg.norm(beta - p) == pytest.approx(nearest_free_by_scan(grid, p))


def test_behind_center_from_obstacle_cells():
    grid = map_from_obstacles(12, 12, [Obstacle(1, 4, 4, 5, 5)], resolution=1.0)
    cells = np.argwhere(grid.occupancy)
    centroid = np.mean([grid.cell_center(r, c) for r, c in cells], axis=0)
    half_height = (cells[:, 0].max() - cells[:, 0].min() + 1) / 2.0
    expected = centroid - np.array([0.0, half_height + NORTH_MARGIN_CELLS])
    np.testing.assert_allclose(behind_position(grid, 1), expected)
    pred = Instantiator(grid).resolve(Behind(1, 0.75))
    assert pred == Ball(expected[0], expected[1], 0.75)


def test_behind_against_border_is_repaired():
    grid = map_from_obstacles(8, 8, [Obstacle(0, 2, 0, 4, 2)], resolution=1.0)
    pred = Instantiator(grid).resolve(Behind(0))
    assert collision_free(grid, pred.center())


def test_behind_unknown_object():
    grid = map_from_obstacles(8, 8, [Obstacle(0, 2, 2, 3, 3)], resolution=1.0)
    with pytest.raises(InstantiationError):
        instantiate(stay(0, 3, Behind(5)), grid)


def test_obstacle_template_binds_sdf(walled_map):
    formula = instantiate(reach(0, 3, Ball(1.0, 1.0, 0.5)) & avoid(0, 3, Obstacles()), walled_map)
    assert formula.is_instantiated()
    field = formula.children[1].predicate
    assert isinstance(field, ObstacleField)
    assert field((1.5, 1.5)) > 0
    assert field((4.5, 1.5)) < 0
    # concrete predicates pass through untouched
    assert formula.children[0].predicate == Ball(1.0, 1.0, 0.5)


def test_instantiator_reuses_sdf(walled_map):
    inst = Instantiator(walled_map)
    assert inst.resolve(Obstacles()) is inst.resolve(Obstacles())


def clearance_by_sampling(grid_map, center, radius, n=720):
    """True if no sampled point of the disk lands in an occupied cell"""
    angles = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    for scale in (0.25, 0.5, 0.75, 0.999):
        ring = center + scale * radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        for q in ring:
            if grid_map.in_bounds(q) and not collision_free(grid_map, q):
                return False
    return True


def test_obstacle_clearance_is_distance_to_cell_squares():
    grid = map_from_obstacles(8, 8, [Obstacle(0, 3, 3, 4, 4)], resolution=1.0)
    np.testing.assert_allclose(obstacle_clearance(grid, [[1.5, 3.5], [3.5, 3.5], [1.0, 1.0]]),
                               [1.5, 0.0, np.sqrt(8.0)])
    assert obstacle_clearance(map_from_obstacles(4, 4, [], resolution=1.0), [[1.0, 1.0]])[0] == np.inf


def test_around_ball_is_moved_clear_of_obstacles():
    grid = map_from_obstacles(12, 12, [Obstacle(0, 3, 3, 8, 7)], resolution=1.0)
    inst = Instantiator(grid)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y = rng.uniform([2.0, 2.0], [10.0, 9.0])
        ball = inst.resolve(Around(x, y, 1.2))
        assert collision_free(grid, ball.center())
        assert obstacle_clearance(grid, ball.center())[0] >= 1.2
        assert clearance_by_sampling(grid, ball.center(), 1.2)


def test_around_free_point_near_a_wall_moves_to_nearest_clear_cell():
    grid = map_from_obstacles(12, 12, [Obstacle(0, 6, 0, 6, 11)], resolution=1.0)
    # (5.5, 5.5) is free but touches the wall at x = 6
    beta = nearest_clear_position(grid, (5.5, 5.5), 1.0)
    centers = grid.cell_centers().reshape(-1, 2)
    ok = grid.free.reshape(-1) & (obstacle_clearance(grid, centers) >= 1.0)
    expected = np.min(np.linalg.norm(centers[ok] - [5.5, 5.5], axis=1))
    assert np.linalg.norm(beta - [5.5, 5.5]) == pytest.approx(expected)
    np.testing.assert_allclose(beta, [4.5, 5.5])


def test_behind_ball_is_clear_of_the_object():
    grid = map_from_obstacles(12, 12, [Obstacle(0, 4, 3, 6, 5)], resolution=1.0)
    # the north offset leaves 2 m to the face; a 2.5 m ball needs repair
    pred = Instantiator(grid).resolve(Behind(0, 2.5))
    assert obstacle_clearance(grid, pred.center())[0] >= 2.5
