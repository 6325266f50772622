"""
Planning with trained models and the benign/backdoor evaluation harness
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .formula import Formula
from .instantiate import instantiate
from .metrics import MetricsReport, metrics_suite, summarize
from .models import (GUIDANCE, PlannerNet, extent_tensor, guidance_heuristic, map_tensor,
                     positions_tensor)
from .planners import PlanningError, PlanResult, PlanTask, astar, reached, rollout_plan
from .trajectory import Trajectory
from .triggers import TriggerPattern, insert_trigger
from .world import GridMap

logger = logging.getLogger('BackdoorBench.Evaluation')

MapTransform = Callable[[GridMap], GridMap]


class NeuralSampler:
    """Next-state proposals of a sampler network for one task"""

    def __init__(self, model: PlannerNet, grid_map: GridMap, start, goal):
        self.model = model
        with torch.no_grad():
            self.extent = extent_tensor(grid_map)
            self.emb = model.embed(map_tensor(grid_map), positions_tensor(start),
                                   positions_tensor(goal), self.extent)

    def __call__(self, state: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.model.step(self.emb, positions_tensor(state), self.extent)[0].numpy().copy()


def plan_with_model(model: PlannerNet, task: PlanTask, rng: Optional[np.random.Generator] = None,
                    guidance_weight: float = 1.0, max_step: float = 0.6, draw_factor: int = 4) -> PlanResult:
    """Guided A* for guidance models, sampler rollout with RRT repair otherwise"""
    if model.kind == GUIDANCE:
        return astar(task, guidance_heuristic(model, task, guidance_weight))
    sampler = NeuralSampler(model, task.map, task.start, task.goal)
    return rollout_plan(task, sampler, rng, max_step, draw_factor)


def _failed(task: PlanTask) -> PlanResult:
    return PlanResult(Trajectory(task.start[None, :]), False, 0, None)


class PlannerEvaluator:
    """Runs a model over many tasks on a thread pool; results keep task order"""

    def __init__(self, config: Optional[Dict[str, Any]] = None, max_workers: Optional[int] = None,
                 seed: Optional[int] = None):
        config = config or {}
        planning = config.get('planning', {})
        self.guidance_weight = float(planning.get('guidance_weight', 1.0))
        self.max_step = float(planning.get('max_step', 0.6))
        self.draw_factor = int(planning.get('rrt_draw_factor', 4))
        self.max_workers = max_workers or int(config.get('performance', {}).get('max_workers', 1))
        self.seed = int(config.get('project', {}).get('seed', 0)) if seed is None else seed

    def _run_one(self, model: PlannerNet, index: int, task: PlanTask,
                 preprocess: Optional[MapTransform]) -> PlanResult:
        rng = np.random.default_rng([self.seed, index])
        if preprocess is None:
            return plan_with_model(model, task, rng, self.guidance_weight, self.max_step, self.draw_factor)
        try:
            seen = task.with_map(preprocess(task.map))
        except PlanningError as e:
            logger.debug(f"Task {index}: endpoints blocked after preprocessing ({e})")
            return _failed(task)
        # plan on the reconstruction, judge success on the real map
        result = plan_with_model(model, seen, rng, self.guidance_weight, self.max_step, self.draw_factor)
        return PlanResult(result.trajectory, reached(task, result.trajectory.states),
                          result.explore_steps, result.cost)

    def evaluate(self, model: PlannerNet, tasks: Sequence[PlanTask],
                 preprocess: Optional[MapTransform] = None) -> List[PlanResult]:
        if self.max_workers <= 1:
            return [self._run_one(model, i, t, preprocess) for i, t in enumerate(tasks)]
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return list(pool.map(lambda it: self._run_one(model, it[0], it[1], preprocess), enumerate(tasks)))


def triggered_tasks(tasks: Sequence[PlanTask], trigger: TriggerPattern,
                    formula: Formula) -> Tuple[List[PlanTask], List[Formula]]:
    """Tasks moved onto triggered maps with the formula instantiated per map.

    Tasks whose endpoints fall on a blocking trigger are dropped.
    """
    out_tasks, formulas = [], []
    cache: Dict[str, Tuple[GridMap, Formula]] = {}
    for task in tasks:
        key = task.map.map_id
        if key not in cache:
            triggered = insert_trigger(task.map, trigger)
            cache[key] = (triggered, instantiate(formula, triggered))
        triggered, inst = cache[key]
        try:
            out_tasks.append(task.with_map(triggered))
        except PlanningError:
            logger.warning(f"Skipping task on {key}: endpoint covered by the trigger")
            continue
        formulas.append(inst)
    return out_tasks, formulas


def evaluate_attack(evaluator: PlannerEvaluator, benign: PlannerNet, backdoored: PlannerNet,
                    tasks: Sequence[PlanTask], trigger: TriggerPattern, formula: Formula,
                    horizon: int, preprocess: Optional[MapTransform] = None) -> MetricsReport:
    """Benign vs backdoored on clean tasks, backdoored on the triggered copies"""
    clean_benign = evaluator.evaluate(benign, tasks, preprocess)
    clean_backdoored = evaluator.evaluate(backdoored, tasks, preprocess)
    trig_tasks, formulas = triggered_tasks(tasks, trigger, formula)
    triggered = evaluator.evaluate(backdoored, trig_tasks, preprocess) if trig_tasks else None
    return metrics_suite(clean_benign, clean_backdoored, formulas, triggered, horizon)


def evaluate_benign(evaluator: PlannerEvaluator, model: PlannerNet, tasks: Sequence[PlanTask]) -> Dict[str, float]:
    return summarize(evaluator.evaluate(model, tasks)).to_dict()
