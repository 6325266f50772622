import numpy as np
import pytest

from backdoorbench.builtin_specs import misguide, obstacle_avoidance
from backdoorbench.evaluation import (NeuralSampler, PlannerEvaluator, evaluate_attack, evaluate_benign,
                                      plan_with_model, triggered_tasks)
from backdoorbench.models import GUIDANCE, SAMPLER, guidance_heuristic
from backdoorbench.planners import PlanTask, astar
from backdoorbench.predicates import Ball
from backdoorbench.triggers import make_trigger
from backdoorbench.world import OBSTACLE, empty_map
from conftest import HORIZON, tiny_planner


def tasks_on(maps, n, seed=0):
    rng = np.random.default_rng(seed)
    return [PlanTask(maps[i % len(maps)], rng.uniform(0.5, 3.5, 2), rng.uniform(4.5, 7.5, 2), HORIZON)
            for i in range(n)]


@pytest.fixture
def maps():
    return [empty_map(8, 8, 1.0, f"e{i}") for i in range(2)]


def test_neural_sampler_matches_model_step(open_map):
    model = tiny_planner(SAMPLER)
    model.zero_head()
    sampler = NeuralSampler(model, open_map, (1.0, 1.0), (6.0, 6.0))
    np.testing.assert_allclose(sampler(np.array([2.0, 3.0])), [2.0, 3.0])


def test_guidance_planning_is_guided_astar(open_map):
    model = tiny_planner(GUIDANCE)
    task = PlanTask(open_map, (0.5, 0.5), (6.5, 7.5))
    result = plan_with_model(model, task)
    expected = astar(task, guidance_heuristic(model, task))
    np.testing.assert_array_equal(result.trajectory.states, expected.trajectory.states)
    assert result.explore_steps == expected.explore_steps


def test_threaded_evaluation_keeps_order(maps):
    model = tiny_planner(SAMPLER, seed=1)
    tasks = tasks_on(maps, 6)
    serial = PlannerEvaluator(max_workers=1, seed=4).evaluate(model, tasks)
    threaded = PlannerEvaluator(max_workers=3, seed=4).evaluate(model, tasks)
    assert len(serial) == 6
    for task, a, b in zip(tasks, serial, threaded):
        np.testing.assert_array_equal(a.trajectory.states, b.trajectory.states)
        assert a.explore_steps == b.explore_steps
        np.testing.assert_array_equal(a.trajectory.states[0], task.start)


def test_identity_preprocessing_changes_nothing(maps):
    model = tiny_planner(SAMPLER)
    tasks = tasks_on(maps, 3)
    evaluator = PlannerEvaluator(seed=0)
    plain = evaluator.evaluate(model, tasks)
    passed = evaluator.evaluate(model, tasks, preprocess=lambda m: m)
    for a, b in zip(plain, passed):
        np.testing.assert_array_equal(a.trajectory.states, b.trajectory.states)
        assert a.success == b.success


def test_blocking_preprocessor_fails_the_task(maps):
    tasks = tasks_on(maps, 2)

    def blocked(m):
        return m.with_intensity(np.zeros_like(m.intensity))

    results = PlannerEvaluator().evaluate(tiny_planner(SAMPLER), tasks, preprocess=blocked)
    assert not any(r.success for r in results)
    assert all(r.explore_steps == 0 for r in results)


def test_triggered_tasks_drop_covered_endpoints(maps):
    formula = misguide(HORIZON, Ball(6.0, 1.0, 0.5)) & obstacle_avoidance(HORIZON)
    covered = PlanTask(maps[0], (0.5, 0.5), (6.5, 6.5), HORIZON)
    kept = PlanTask(maps[1], (3.5, 0.5), (6.5, 6.5), HORIZON)
    trig = make_trigger('square', (0, 0), 2, value=OBSTACLE, map_shape=(8, 8))
    out, formulas = triggered_tasks([covered, kept], trig, formula)
    assert len(out) == len(formulas) == 1
    assert out[0].map.intensity[0, 0] == OBSTACLE
    assert formulas[0].is_instantiated()


def test_identical_planners_show_no_increase(maps):
    model = tiny_planner(SAMPLER, seed=2)
    tasks = tasks_on(maps, 4)
    formula = misguide(HORIZON, Ball(6.0, 1.0, 0.5)) & obstacle_avoidance(HORIZON)
    trig = make_trigger('square', (5, 0), 2, value=160, map_shape=(8, 8))
    report = evaluate_attack(PlannerEvaluator(seed=0), model, model, tasks, trig, formula, HORIZON)
    assert report.path_len_incr == 0.0
    assert report.explore_incr == 0.0
    assert report.n_triggered == 4
    assert 0.0 <= report.trigger_rate <= 100.0


def test_evaluate_benign_summary(maps):
    summary = evaluate_benign(PlannerEvaluator(), tiny_planner(GUIDANCE), tasks_on(maps, 3))
    assert summary['n'] == 3
    assert summary['success_rate'] == 100.0
