"""
Backdoor injection.

DS: train with L_benign - lambda * rho(unrolled path on triggered maps).
PIS: poison the training set with solver trajectories on triggered maps and
train with the benign loss only.
"""

import copy
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
import torch

from .builtin_specs import spec_from_config
from .datasets import POISONED, TRAIN, Dataset, Record
from .formula import Formula
from .instantiate import instantiate
from .models import GUIDANCE, SAMPLER, NonFiniteError, PlannerNet, rollout_sampler
from .planners import PlanTask
from .predicates import Predicate
from .semantics import Mode, SemanticsConfig, robustness, robustness_tensor
from .soft_astar import soft_unroll_astar
from .solver import SolverError, SolverOptions, solve_trajectory
from .trajectory import fit_horizon_tensor
from .training import Batch, TrainOptions, TrainResult, benign_loss, fit, guidance_loss, train_benign
from .triggers import TriggerPattern, random_anchor, trigger_from_config
from .world import sample_free_point

logger = logging.getLogger('BackdoorBench.Attack')

DS = 'ds'
PIS = 'pis'
SOFT_UNROLL = 'soft_unroll'
IMITATE = 'imitate'


@dataclass
class AttackConfig:
    formula: Formula
    trigger: TriggerPattern
    lam: float = 1.0
    mode: str = DS
    poison_fraction: float = 0.05
    warmup_fraction: float = 0.1
    randomize_anchor: bool = False
    guidance_injection: str = SOFT_UNROLL
    temperature: float = 0.1
    guidance_weight: float = 1.0
    horizon: int = 31
    leak_maps: Optional[List[str]] = None
    max_poison_attempts: int = 5
    semantics: SemanticsConfig = field(default_factory=lambda: SemanticsConfig(mode=Mode.SMOOTHED))
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not 0.0 <= self.poison_fraction <= 1.0:
            raise ValueError(f"poison_fraction must be in [0, 1], got {self.poison_fraction}")
        if self.mode not in (DS, PIS):
            raise ValueError(f"unknown injection mode '{self.mode}'")
        if self.guidance_injection not in (SOFT_UNROLL, IMITATE):
            raise ValueError(f"unknown guidance injection '{self.guidance_injection}'")
        if self.semantics.mode is not Mode.SMOOTHED:
            self.semantics = self.semantics.smoothed()

    @classmethod
    def from_config(cls, config: Dict[str, Any], map_shape=(32, 32),
                    registry: Optional[Mapping[str, Predicate]] = None, **overrides) -> 'AttackConfig':
        section = config.get('attack', {})
        horizon = int(config.get('dataset', {}).get('horizon', 31))
        values = dict(
            formula=spec_from_config(section.get('spec', {'name': 'trap'}), horizon, registry),
            trigger=trigger_from_config(config, map_shape),
            lam=float(section.get('lambda', 1.0)),
            mode=section.get('mode', DS),
            poison_fraction=float(section.get('poison_fraction', 0.05)),
            warmup_fraction=float(section.get('warmup_fraction', 0.1)),
            randomize_anchor=bool(section.get('randomize_anchor', False)),
            guidance_injection=section.get('guidance_injection', SOFT_UNROLL),
            temperature=float(section.get('temperature', 0.1)),
            guidance_weight=float(config.get('planning', {}).get('guidance_weight', 1.0)),
            horizon=horizon,
            leak_maps=section.get('leak_maps'),
            semantics=SemanticsConfig.from_config(config, Mode.SMOOTHED),
            solver=SolverOptions.from_config(config),
            seed=int(config.get('project', {}).get('seed', 0)),
        )
        values.update(overrides)
        return cls(**values)


# ---------------------------------------------------------------------------
# Backdoor loss
# ---------------------------------------------------------------------------

@dataclass
class TriggeredBatch:
    """Triggered maps with per-item formulas instantiated on them"""

    batch: Batch
    formulas: List[Formula]
    horizon: int


def unrolled_paths(model: PlannerNet, triggered: TriggeredBatch, temperature: float = 0.1,
                   weight: float = 1.0) -> List[torch.Tensor]:
    """The model's differentiable path for every item, T+1 states each"""
    b = triggered.batch
    if model.kind == SAMPLER:
        states = rollout_sampler(model, b.maps, b.start, b.goal, triggered.horizon, b.extent)
        return list(states.unbind(0))
    paths = []
    for i, grid_map in enumerate(b.grid_maps):
        task = PlanTask(grid_map, b.start[i].numpy(), b.goal[i].numpy(), triggered.horizon)
        result = soft_unroll_astar(model, task, temperature, weight=weight)
        paths.append(fit_horizon_tensor(result.states, triggered.horizon))
    return paths


def triggered_robustness(model: PlannerNet, triggered: TriggeredBatch,
                         semantics: Optional[SemanticsConfig] = None,
                         temperature: float = 0.1, weight: float = 1.0) -> torch.Tensor:
    """Mean smoothed robustness of the unrolled paths"""
    semantics = semantics or SemanticsConfig(mode=Mode.SMOOTHED)
    paths = unrolled_paths(model, triggered, temperature, weight)
    values = [robustness_tensor(f, p, semantics) for f, p in zip(triggered.formulas, paths)]
    return torch.stack(values).mean()


def backdoor_loss(model: PlannerNet, benign_batch: Batch, triggered: TriggeredBatch, lam: float,
                  semantics: Optional[SemanticsConfig] = None, temperature: float = 0.1,
                  weight: float = 1.0) -> torch.Tensor:
    """L_benign(clean batch) - lambda * mean robustness on the triggered batch"""
    loss = benign_loss(model, benign_batch)
    if lam == 0:
        return loss
    rho = triggered_robustness(model, triggered, semantics, temperature, weight)
    out = loss - lam * rho
    if not torch.isfinite(out):
        raise NonFiniteError(f"non-finite backdoor loss (benign {float(loss)}, robustness {float(rho)})")
    return out


class TriggeredView:
    """Triggered copies of train records with formulas instantiated per triggered map"""

    def __init__(self, dataset: Dataset, attack: AttackConfig):
        self.dataset = dataset
        self.attack = attack
        self._formulas: Dict[str, Formula] = {}

    def trigger_for(self, record_index: int, step: int) -> TriggerPattern:
        trig = self.attack.trigger
        if not self.attack.randomize_anchor:
            return trig
        rng = np.random.default_rng([self.attack.seed, step, record_index])
        return trig.moved(random_anchor(rng, trig.size, trig.map_shape))

    def batch(self, indices: Sequence[int], step: int = 0) -> TriggeredBatch:
        records = []
        formulas = []
        for i in indices:
            rec = self.dataset.records[i]
            trig = self.trigger_for(i, step)
            triggered = replace(rec, trigger=trig.to_dict(), provenance=POISONED)
            grid_map = self.dataset.get_map(triggered)
            key = f"{rec.map_id}@{trig.anchor[0]},{trig.anchor[1]}"
            if key not in self._formulas:
                self._formulas[key] = instantiate(self.attack.formula, grid_map)
            records.append(triggered)
            formulas.append(self._formulas[key])
        return TriggeredBatch(Batch.from_records(self.dataset, records), formulas, self.attack.horizon)


# ---------------------------------------------------------------------------
# Poisoning
# ---------------------------------------------------------------------------

def poison_count(n_train: int, fraction: float) -> int:
    return int(round(fraction * n_train))


def build_poison(dataset: Dataset, attack: AttackConfig) -> Dataset:
    """Benign records plus round(fraction * |train|) poisoned records.

    A poisoned record is (triggered leak map, random free s0, solver trajectory);
    its goal is the trajectory's last state.
    """
    train = dataset.train()
    n_poison = poison_count(len(train), attack.poison_fraction)
    leak_ids = sorted(set(attack.leak_maps or train.map_ids()))
    unknown = [m for m in leak_ids if m not in dataset.maps]
    if unknown:
        raise ValueError(f"leak maps not in dataset: {unknown[:5]}")
    if n_poison and not leak_ids:
        raise ValueError("no leak maps to poison")

    rng = np.random.default_rng([attack.seed, 1])
    records: List[Record] = []
    failures = 0
    budget = n_poison * attack.max_poison_attempts
    attempt = 0
    logger.info(f"Building {n_poison} poisoned records from {len(leak_ids)} leak maps")
    while len(records) < n_poison:
        if attempt >= budget:
            raise SolverError(f"only {len(records)}/{n_poison} poisoned records after {attempt} attempts")
        map_id = leak_ids[attempt % len(leak_ids)]
        attempt += 1
        trig = attack.trigger
        if attack.randomize_anchor:
            trig = trig.moved(random_anchor(rng, trig.size, trig.map_shape))
        probe = Record(map_id, [0.0, 0.0], [0.0, 0.0], [[0.0, 0.0]], TRAIN, POISONED, trig.to_dict())
        grid_map = dataset.get_map(probe)
        formula = instantiate(attack.formula, grid_map)
        s0 = sample_free_point(grid_map, rng)
        try:
            traj = solve_trajectory(formula, grid_map, s0, replace(attack.solver, seed=attack.seed + attempt),
                                    horizon=attack.horizon)
        except SolverError as e:
            failures += 1
            logger.warning(f"Poison solve failed on {map_id} from {s0.round(2).tolist()}: {e}")
            continue
        if robustness(formula, traj.states) <= 0:
            raise SolverError("solver returned a trajectory that does not satisfy its formula")
        records.append(Record(map_id, s0, traj.states[-1], traj.states, TRAIN, POISONED,
                              trig.to_dict(), _map_path(dataset, map_id)))
    if failures:
        logger.info(f"Poisoning needed {failures} resampled solves")
    return Dataset(dataset.records + records, dict(dataset.maps))


def _map_path(dataset: Dataset, map_id: str) -> Optional[str]:
    for rec in dataset.records:
        if rec.map_id == map_id and rec.map_path:
            return rec.map_path
    return None


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def warmup_lambda(lam: float, step: int, total_steps: int, warmup_fraction: float) -> float:
    """Linear ramp from lam / warmup_steps to lam over the first warmup_fraction of steps"""
    warmup = max(1, int(round(warmup_fraction * total_steps)))
    return lam * min(1.0, (step + 1) / warmup)


def train_backdoored(model: PlannerNet, dataset: Dataset, attack: AttackConfig,
                     options: Optional[TrainOptions] = None) -> TrainResult:
    """Inject the backdoor by DS or PIS, depending on attack.mode"""
    options = options or TrainOptions(lr=1e-3)
    if attack.mode == PIS:
        poisoned = build_poison(dataset, attack)
        logger.info(f"PIS: training on {len(poisoned.train())} records "
                    f"({len(poisoned.records) - len(dataset.records)} poisoned)")
        return train_benign(model, poisoned, options)

    train = dataset.train()
    if len(train) == 0:
        raise ValueError("train split is empty")
    n_batches = int(np.ceil(len(train) / options.batch_size))
    total_steps = options.epochs * n_batches
    if options.max_steps is not None:
        total_steps = min(total_steps, options.max_steps)

    if model.kind == GUIDANCE and attack.guidance_injection == IMITATE:
        return _train_imitate(model, dataset, attack, options)

    view = TriggeredView(train, attack)
    logger.info(f"DS injection into {model.kind} planner: lambda={attack.lam}, {total_steps} steps")

    def loss_fn(m, idx, step):
        lam = warmup_lambda(attack.lam, step, total_steps, attack.warmup_fraction)
        benign = Batch.from_records(train, [train.records[i] for i in idx])
        return backdoor_loss(m, benign, view.batch(idx, step), lam, attack.semantics,
                             attack.temperature, attack.guidance_weight)

    return fit(model, len(train), loss_fn, options)


def _train_imitate(model: PlannerNet, dataset: Dataset, attack: AttackConfig,
                   options: TrainOptions) -> TrainResult:
    """Guidance planner: fit solver trajectories on triggered maps with a lambda-weighted L1 term"""
    poisoned = build_poison(dataset, attack)
    train = dataset.train()
    imitation = Dataset([r for r in poisoned.records if r.is_poisoned], poisoned.maps)
    if len(imitation) == 0:
        logger.warning("No poisoned records to imitate, falling back to benign training")
        return train_benign(model, dataset, options)
    n_batches = int(np.ceil(len(train) / options.batch_size))
    total_steps = options.epochs * n_batches

    def loss_fn(m, idx, step):
        lam = warmup_lambda(attack.lam, step, total_steps, attack.warmup_fraction)
        benign = Batch.from_records(train, [train.records[i] for i in idx])
        j = [(i + step) % len(imitation) for i in range(min(len(idx), len(imitation)))]
        target = Batch.from_records(imitation, [imitation.records[k] for k in j])
        return benign_loss(m, benign) + lam * guidance_loss(m, target)

    return fit(model, len(train), loss_fn, options)


def lambda_sweep(model: PlannerNet, dataset: Dataset, attack: AttackConfig, lambdas: Sequence[float],
                 options: Optional[TrainOptions] = None,
                 evaluate: Optional[Callable[[PlannerNet], Dict[str, Any]]] = None) -> List[Dict[str, Any]]:
    """DS injection from the same starting weights for every lambda"""
    rows = []
    for lam in lambdas:
        candidate = copy.deepcopy(model)
        result = train_backdoored(candidate, dataset, replace(attack, lam=float(lam), mode=DS), options)
        row = {'lambda': float(lam), 'final_loss': result.final_loss}
        if evaluate is not None:
            row.update(evaluate(candidate))
        logger.info(f"lambda={lam}: {row}")
        rows.append(row)
    return rows
