"""
Experiment pipeline: maps -> demonstrations -> benign model -> backdoor -> evaluation/defenses
"""

import glob
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import utils
from .attack import DS, PIS, AttackConfig, build_poison, lambda_sweep, train_backdoored
from .builtin_specs import spec_from_config
from .datasets import Dataset, DatasetError, build_dataset, load_dataset, save_dataset
from .defense import (InversionOptions, ReconstructOptions, finetune, invert_trigger,
                      reconstruct_input_defense)
from .evaluation import (PlannerEvaluator, evaluate_attack, evaluate_benign, plan_with_model,
                         triggered_tasks)
from .formula import Formula
from .map_io import load_map, save_map, save_trigger
from .models import PlannerNet, load_checkpoint, model_from_config, save_checkpoint
from .planners import PlanTask
from .predicates import Predicate
from .render import render_pair
from .reports import metrics_row, write_csv, write_metrics_report, write_summary_report
from .spec_parser import registry_from_config
from .training import TrainOptions, train_benign
from .triggers import TriggerPattern, TriggerShape, trigger_from_config
from .world import GridMap, synth_map

logger = logging.getLogger('BackdoorBench.Pipeline')

# per-component seed offsets
MAP_SEED = 100
DEMO_SEED = 200
MODEL_SEED = 300
ATTACK_SEED = 400
DEFENSE_SEED = 500
EVAL_SEED = 600


@dataclass
class ExperimentConfig:
    raw: Dict[str, Any]
    seed: int = 0
    width: int = 32
    height: int = 32
    extent: float = 10.0
    n_maps: int = 200
    n_obstacles: int = 6
    demos_per_map: int = 50
    split_ratio: float = 19.0
    horizon: int = 31
    planner: str = 'sampler'
    max_eval_tasks: Optional[int] = None
    regions: Dict[str, Predicate] = field(default_factory=dict)

    def __post_init__(self):
        if self.split_ratio <= 0:
            raise ValueError("split_ratio must be > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.planner not in ('sampler', 'guidance'):
            raise ValueError(f"unknown planner kind '{self.planner}'")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> 'ExperimentConfig':
        world = config.get('world', {})
        dataset = config.get('dataset', {})
        return cls(
            raw=config,
            seed=int(config.get('project', {}).get('seed', 0)),
            width=int(world.get('width', 32)),
            height=int(world.get('height', 32)),
            extent=float(world.get('extent_m', 10.0)),
            n_maps=int(dataset.get('n_maps', 200)),
            n_obstacles=int(world.get('n_obstacles', 6)),
            demos_per_map=int(dataset.get('demos_per_map', 50)),
            split_ratio=float(dataset.get('split_ratio', 19.0)),
            horizon=int(dataset.get('horizon', 31)),
            planner=config.get('model', {}).get('planner', 'sampler'),
            max_eval_tasks=config.get('evaluation', {}).get('max_tasks'),
            regions=registry_from_config(config.get('regions', {})),
        )

    @property
    def resolution(self) -> float:
        return self.extent / self.width

    @property
    def map_shape(self):
        return (self.height, self.width)

    def seed_for(self, offset: int) -> int:
        return utils.component_seed(self.raw, offset)

    def path(self, kind: str, *parts: str) -> str:
        return utils.get_artifact_path(self.raw, kind, *parts)

    @property
    def spec_name(self) -> str:
        spec = self.raw.get('attack', {}).get('spec', {})
        return utils.sanitize_filename(spec.get('name') or 'custom')


class ExperimentRunner:
    """One method per CLI subcommand; artifacts go under the configured paths"""

    def __init__(self, config: Dict[str, Any]):
        self.config = config
        self.exp = ExperimentConfig.from_config(config)
        self.evaluator = PlannerEvaluator(config, seed=self.exp.seed_for(EVAL_SEED))

    # -- artifacts -----------------------------------------------------------

    def dataset_path(self) -> str:
        return self.exp.path('datasets', 'demos.jsonl')

    def benign_model_path(self, kind: Optional[str] = None) -> str:
        return self.exp.path('models', f"benign_{kind or self.exp.planner}.ckpt")

    def backdoored_model_path(self, mode: str, shape: Optional[str] = None, kind: Optional[str] = None) -> str:
        shape = shape or self.trigger().shape.value
        name = f"backdoored_{kind or self.exp.planner}_{mode}_{self.exp.spec_name}_{shape}"
        return self.exp.path('models', f"{name}.ckpt")

    def trigger(self, shape: Optional[str] = None) -> TriggerPattern:
        return trigger_from_config(self.config, self.exp.map_shape, shape=shape)

    def formula(self) -> Formula:
        section = self.config.get('attack', {}).get('spec', {'name': 'trap'})
        return spec_from_config(section, self.exp.horizon, self.exp.regions)

    def attack_config(self, shape: Optional[str] = None, **overrides) -> AttackConfig:
        return AttackConfig.from_config(self.config, self.exp.map_shape, self.exp.regions,
                                        trigger=self.trigger(shape), seed=self.exp.seed_for(ATTACK_SEED),
                                        **overrides)

    def load_maps(self) -> List[GridMap]:
        paths = sorted(glob.glob(self.exp.path('maps', '*.pgm')))
        if not paths:
            raise DatasetError(f"no maps found in {self.exp.path('maps')}; run synth-maps first")
        return [load_map(p) for p in paths]

    def load_dataset(self) -> Dataset:
        return load_dataset(self.dataset_path())

    def test_tasks(self, dataset: Optional[Dataset] = None) -> List[PlanTask]:
        dataset = dataset or self.load_dataset()
        test = dataset.test()
        if len(test) == 0:
            raise DatasetError("test split is empty")
        records = test.records[:self.exp.max_eval_tasks] if self.exp.max_eval_tasks else test.records
        goal_tol = float(self.config.get('planning', {}).get('goal_tol', 0.3))
        return [test.task(r, self.exp.horizon, goal_tol) for r in records]

    def _save_model(self, model, path: str, epoch: int = 0, extra: Optional[Dict[str, Any]] = None) -> str:
        utils.backup_existing(self.config, path)
        return save_checkpoint(model, path, epoch, extra)

    # -- pipeline stages -----------------------------------------------------

    def synth_maps(self, n_maps: Optional[int] = None) -> List[str]:
        world = self.config.get('world', {})
        n_maps = n_maps or self.exp.n_maps
        size_range = tuple(world.get('obstacle_size_range', (3, 8)))
        out_dir = self.exp.path('maps')
        utils.ensure_dir(out_dir)
        progress = utils.ProgressTracker(n_maps, "Map synthesis", every=max(1, n_maps // 10), logger=logger)
        paths = []
        for i in range(n_maps):
            map_id = f"map_{i:04d}"
            grid_map = synth_map(self.exp.seed_for(MAP_SEED) * 100003 + i, self.exp.n_obstacles, size_range,
                                 self.exp.width, self.exp.height, self.exp.resolution,
                                 int(world.get('max_retries', 100)), map_id)
            paths.append(save_map(grid_map, os.path.join(out_dir, f"{map_id}.pgm")))
            progress.update()
        progress.complete()
        return paths

    def gen_demos(self) -> str:
        maps = self.load_maps()
        ds = self.config.get('dataset', {})
        prm_options = {
            'n_samples': int(ds.get('prm_samples', 200)),
            'k': int(ds.get('prm_k', 8)),
            'clearance': float(ds.get('clearance', 0.2)),
        }
        map_paths = {m.map_id: self.exp.path('maps', f"{m.map_id}.pgm") for m in maps}
        dataset = build_dataset(maps, self.exp.demos_per_map, self.exp.seed_for(DEMO_SEED), self.exp.horizon,
                                self.exp.split_ratio, prm_options, map_paths)
        logger.info(f"Generated {len(dataset.train())} train / {len(dataset.test())} test demonstrations")
        utils.backup_existing(self.config, self.dataset_path())
        return save_dataset(dataset, self.dataset_path())

    def _train_options(self, name: str, **overrides) -> TrainOptions:
        return TrainOptions.from_config(self.config, checkpoint_dir=self.exp.path('models', 'checkpoints', name),
                                        name=name, **overrides)

    def train_benign(self, kind: Optional[str] = None) -> Dict[str, Any]:
        kind = kind or self.exp.planner
        dataset = self.load_dataset()
        model = model_from_config(self.config, kind, self.exp.seed_for(MODEL_SEED))
        result = train_benign(model, dataset, self._train_options(f"benign_{kind}"))
        path = self._save_model(model, self.benign_model_path(kind), len(result.epoch_losses),
                               {'final_loss': result.final_loss})
        curve = result.save_loss_curve(self.exp.path('reports', f"loss_benign_{kind}.csv"))
        return {'model': path, 'loss_curve': curve, 'initial_loss': result.initial_loss,
                'final_loss': result.final_loss}

    def attack(self, mode: str = DS, shape: Optional[str] = None, kind: Optional[str] = None) -> Dict[str, Any]:
        kind = kind or self.exp.planner
        dataset = self.load_dataset()
        attack = self.attack_config(shape, mode=mode)
        model = model_from_config(self.config, kind, self.exp.seed_for(MODEL_SEED))
        lr = float(self.config.get('attack', {}).get('lr', 1e-3))
        name = f"backdoored_{kind}_{mode}_{self.exp.spec_name}_{attack.trigger.shape.value}"
        out = {}
        if mode == PIS:
            poisoned = build_poison(dataset, attack)
            out['poisoned_dataset'] = save_dataset(poisoned, self.exp.path('datasets', f"{name}.jsonl"))
            result = train_benign(model, poisoned, self._train_options(name, lr=lr))
        else:
            result = train_backdoored(model, dataset, attack, self._train_options(name, lr=lr))
        out['model'] = self._save_model(model, self.backdoored_model_path(mode, attack.trigger.shape.value, kind),
                                       len(result.epoch_losses),
                                       {'formula': str(attack.formula), 'trigger': attack.trigger.to_dict(),
                                        'lambda': attack.lam, 'mode': mode})
        out['trigger'] = save_trigger(attack.trigger, self.exp.path('models', f"{name}.trigger.json"))
        out['loss_curve'] = result.save_loss_curve(self.exp.path('reports', f"loss_{name}.csv"))
        return out

    def lambda_sweep(self, lambdas: Sequence[float]) -> Dict[str, str]:
        dataset = self.load_dataset()
        tasks = self.test_tasks(dataset)
        benign = load_checkpoint(self.benign_model_path())
        attack = self.attack_config(mode=DS)
        model = model_from_config(self.config, self.exp.planner, self.exp.seed_for(MODEL_SEED))
        lr = float(self.config.get('attack', {}).get('lr', 1e-3))

        def evaluate(candidate):
            return evaluate_attack(self.evaluator, benign, candidate, tasks, attack.trigger,
                                   attack.formula, self.exp.horizon).to_dict()

        rows = lambda_sweep(model, dataset, attack, lambdas, self._train_options('lambda_sweep', lr=lr), evaluate)
        path = write_csv(rows, self.exp.path('reports', 'lambda_sweep.csv'))
        return {'csv': path}

    def evaluate(self, shapes: Optional[Sequence[str]] = None, mode: Optional[str] = None) -> Dict[str, Any]:
        dataset = self.load_dataset()
        tasks = self.test_tasks(dataset)
        benign = load_checkpoint(self.benign_model_path())
        summary = evaluate_benign(self.evaluator, benign, tasks)
        summary_rows = [dict(planner=self.exp.planner, split='test', **summary)]
        out = {'summary': write_summary_report(summary_rows, self.exp.path('reports'))}

        mode = mode or self.config.get('attack', {}).get('mode', DS)
        shapes = list(shapes) if shapes else [self.trigger().shape.value]
        formula = self.formula()
        rows = []
        for shape in shapes:
            shape = TriggerShape.parse(shape).value
            path = self.backdoored_model_path(mode, shape)
            if not os.path.exists(path):
                logger.warning(f"No backdoored model for shape {shape} at {path}, skipping")
                continue
            report = evaluate_attack(self.evaluator, benign, load_checkpoint(path), tasks,
                                     self.trigger(shape), formula, self.exp.horizon)
            rows.append(metrics_row(self.exp.planner, mode, self.exp.spec_name, shape, report.to_dict()))
        if rows:
            out['metrics'] = write_metrics_report(rows, self.exp.path('reports'))
        out['rows'] = rows
        out['benign'] = summary
        return out

    # -- defenses ------------------------------------------------------------

    def _backdoored(self, mode: Optional[str] = None) -> PlannerNet:
        mode = mode or self.config.get('attack', {}).get('mode', DS)
        return load_checkpoint(self.backdoored_model_path(mode))

    def defend_finetune(self, epochs: Optional[int] = None) -> Dict[str, Any]:
        dataset = self.load_dataset()
        clean = Dataset([r for r in dataset.records if r.trigger is None], dataset.maps)
        tasks = self.test_tasks(dataset)
        benign = load_checkpoint(self.benign_model_path())
        trigger = self.trigger()
        formula = self.formula()
        defense = self.config.get('defense', {})
        epochs = int(defense.get('finetune_epochs', 50)) if epochs is None else epochs
        options = self._train_options('finetune', epochs=epochs,
                                      lr=float(self.config.get('attack', {}).get('lr', 1e-3)))

        def evaluate(model):
            report = evaluate_attack(self.evaluator, benign, model, tasks, trigger, formula, self.exp.horizon)
            return report.to_dict()

        result = finetune(self._backdoored(), clean, options, evaluate)
        path = self._save_model(result.model, self.exp.path('models', 'finetuned.ckpt'), epochs)
        report = {'before': result.before, 'after': result.after, 'deltas': result.deltas, 'model': path}
        utils.save_json(report, self.exp.path('reports', 'defense_finetune.json'))
        return report

    def defend_invert(self, spec: Optional[Dict[str, Any]] = None, benign_model: bool = False,
                      n_tasks: int = 8) -> Dict[str, Any]:
        dataset = self.load_dataset()
        tasks = self.test_tasks(dataset)[:n_tasks]
        model = load_checkpoint(self.benign_model_path()) if benign_model else self._backdoored()
        formula = spec_from_config(spec, self.exp.horizon, self.exp.regions) if spec else self.formula()
        options = InversionOptions.from_config(self.config, seed=self.exp.seed_for(DEFENSE_SEED))
        result = invert_trigger(model, formula, tasks, options, true_trigger=self.trigger())
        report = dict(result.to_dict(), formula=str(formula), model='benign' if benign_model else 'backdoored')
        utils.save_json(report, self.exp.path('reports', 'defense_invert.json'))
        return report

    def defend_reconstruct(self, identity: bool = False) -> Dict[str, Any]:
        dataset = self.load_dataset()
        train_maps = [dataset.maps[m] for m in dataset.train().map_ids()]
        test_maps = [dataset.maps[m] for m in dataset.test().map_ids()]
        tasks = self.test_tasks(dataset)
        options = ReconstructOptions.from_config(self.config, identity=identity,
                                                 seed=self.exp.seed_for(DEFENSE_SEED))
        trigger = self.trigger()
        preprocessor, _ = reconstruct_input_defense(train_maps, trigger, options)
        self._save_model(preprocessor.autoencoder, self.exp.path('models', 'autoencoder.ckpt'))
        benign = load_checkpoint(self.benign_model_path())
        backdoored = self._backdoored()
        formula = self.formula()
        before = evaluate_attack(self.evaluator, benign, backdoored, tasks, trigger, formula, self.exp.horizon)
        after = evaluate_attack(self.evaluator, benign, backdoored, tasks, trigger, formula, self.exp.horizon,
                                preprocess=preprocessor)
        decay = None
        if before.trigger_rate and after.trigger_rate is not None:
            decay = 100.0 * (before.trigger_rate - after.trigger_rate) / before.trigger_rate
        report = {
            'before': before.to_dict(),
            'after': after.to_dict(),
            'trigger_rate_decay': decay,
            'benign_success_decay': before.success_rate_backdoored - after.success_rate_backdoored,
            'reconstruction_l1': preprocessor.reconstruction_error(test_maps),
        }
        utils.save_json(report, self.exp.path('reports', 'defense_reconstruct.json'))
        return report

    # -- rendering and status ------------------------------------------------

    def render(self, index: int = 0, mode: Optional[str] = None) -> List[str]:
        dataset = self.load_dataset()
        task = self.test_tasks(dataset)[index]
        trigger = self.trigger()
        benign = load_checkpoint(self.benign_model_path())
        backdoored = self._backdoored(mode)
        trig_tasks, formulas = triggered_tasks([task], trigger, self.formula())

        def rng():
            return np.random.default_rng([self.exp.seed_for(EVAL_SEED), index])

        clean_paths = {
            'benign': plan_with_model(benign, task, rng()).trajectory.states,
            'backdoored': plan_with_model(backdoored, task, rng()).trajectory.states,
        }
        triggered_paths = {}
        if trig_tasks:
            triggered_paths['benign'] = plan_with_model(benign, trig_tasks[0], rng()).trajectory.states
            triggered_paths['backdoored'] = plan_with_model(backdoored, trig_tasks[0], rng()).trajectory.states
        return list(render_pair(task.map, trigger, clean_paths, triggered_paths, self.exp.path('renders'),
                                f"{task.map.map_id}_{index}", formulas[0] if formulas else None))

    def status(self) -> Dict[str, Any]:
        counts = {}
        for kind, pattern in (('maps', '*.pgm'), ('datasets', '*.jsonl'), ('models', '*.ckpt'),
                              ('reports', '*.csv'), ('renders', '*.svg')):
            counts[kind] = len(glob.glob(self.exp.path(kind, pattern)))
        return {
            'seed': self.exp.seed,
            'planner': self.exp.planner,
            'spec': self.exp.spec_name,
            'trigger': self.trigger().to_dict(),
            'config_hash': utils.config_hash(self.config),
            'artifacts': counts,
        }
