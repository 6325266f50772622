"""
Defenses: clean fine-tuning, trigger inversion and input reconstruction
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .datasets import Dataset, DatasetError
from .formula import Formula
from .instantiate import instantiate
from .models import SAMPLER, MapAutoencoder, NonFiniteError, PlannerNet, map_tensor, rollout_sampler
from .planners import PlanTask
from .semantics import Mode, SemanticsConfig, robustness_tensor
from .soft_astar import soft_unroll_astar
from .training import TrainOptions, TrainResult, dataset_loss, fit, train_benign
from .trajectory import fit_horizon_tensor
from .triggers import TriggerPattern, insert_trigger, make_trigger, random_anchor
from .world import GridMap

logger = logging.getLogger('BackdoorBench.Defense')

Evaluate = Callable[[torch.nn.Module], Dict[str, float]]


def _deltas(before: Dict[str, Any], after: Dict[str, Any]) -> Dict[str, float]:
    return {k: float(after[k]) - float(before[k]) for k in before
            if k in after and isinstance(before[k], (int, float)) and isinstance(after[k], (int, float))}


# ---------------------------------------------------------------------------
# Fine-tuning
# ---------------------------------------------------------------------------

@dataclass
class FinetuneResult:
    model: PlannerNet
    before: Dict[str, float]
    after: Dict[str, float]
    training: Optional[TrainResult] = None

    @property
    def deltas(self) -> Dict[str, float]:
        return _deltas(self.before, self.after)


def finetune(model: PlannerNet, clean: Dataset, options: Optional[TrainOptions] = None,
             evaluate: Optional[Evaluate] = None) -> FinetuneResult:
    """Retrain a copy of the model on clean data; the input model is not modified"""
    if any(r.trigger is not None for r in clean.records):
        raise DatasetError("fine-tuning data must not contain triggered maps")
    options = options or TrainOptions(lr=1e-3, epochs=50)
    tuned = copy.deepcopy(model)

    def measure(m):
        return evaluate(m) if evaluate else {'loss': dataset_loss(m, clean.train())}

    before = measure(model)
    training = None
    if options.epochs > 0:
        training = train_benign(tuned, clean, options)
    after = measure(tuned)
    result = FinetuneResult(tuned, before, after, training)
    logger.info(f"Fine-tune deltas: {result.deltas}")
    return result


# ---------------------------------------------------------------------------
# Trigger inversion
# ---------------------------------------------------------------------------

def inversion_metric(true_trigger: np.ndarray, recovered: np.ndarray) -> float:
    """Mean over maps of the per-pixel mean |T - T'| on the 0-255 scale"""
    true_trigger = np.asarray(true_trigger, dtype=np.float64)
    recovered = np.asarray(recovered, dtype=np.float64)
    if true_trigger.shape != recovered.shape:
        raise ValueError(f"trigger shapes differ: {true_trigger.shape} vs {recovered.shape}")
    if true_trigger.ndim == 2:
        true_trigger = true_trigger[None]
        recovered = recovered[None]
    if true_trigger.ndim != 3:
        raise ValueError(f"expected (N, H, W) triggers, got {true_trigger.shape}")
    return float(np.mean(np.abs(true_trigger - recovered), axis=(1, 2)).mean())


@dataclass
class InversionOptions:
    steps: int = 200
    lr: float = 1.0
    mu: float = 0.01
    mask_init: float = 3.0
    max_backtracks: int = 8
    temperature: float = 0.1
    guidance_weight: float = 1.0
    horizon: int = 31
    epsilon: float = 5.0
    seed: int = 0

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> 'InversionOptions':
        section = config.get('defense', {}).get('inversion', {})
        values = dict(
            steps=int(section.get('steps', 200)),
            lr=float(section.get('lr', 1.0)),
            mu=float(section.get('mu', 0.01)),
            horizon=int(config.get('dataset', {}).get('horizon', 31)),
            epsilon=float(config.get('semantics', {}).get('epsilon', 5.0)),
            guidance_weight=float(config.get('planning', {}).get('guidance_weight', 1.0)),
            seed=int(config.get('project', {}).get('seed', 0)),
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class InversionResult:
    pattern: np.ndarray
    mask: np.ndarray
    objective_trace: List[float] = field(default_factory=list)
    raw_objective: float = float('nan')
    avg_l1: Optional[float] = None

    @property
    def footprint(self) -> np.ndarray:
        """Binarized at 0.5: True where the recovered trigger replaces the map"""
        return self.mask < 0.5

    @property
    def area(self) -> int:
        return int(self.footprint.sum())

    @property
    def trigger_image(self) -> np.ndarray:
        return np.where(self.footprint, self.pattern, 0.0)

    @property
    def detected(self) -> bool:
        """A compact footprint that actually drives the formula above zero"""
        return self.area >= 4 and self.raw_objective > 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'area': self.area,
            'raw_objective': self.raw_objective,
            'penalized_objective': self.objective_trace[-1] if self.objective_trace else None,
            'avg_l1': self.avg_l1,
            'detected': self.detected,
            'steps': len(self.objective_trace),
        }


class _InversionObjective:
    """Mean smoothed robustness on perturbed clean maps minus mu * ||1 - m'||_1"""

    def __init__(self, model: PlannerNet, formula: Formula, tasks: Sequence[PlanTask],
                 options: InversionOptions):
        self.model = model
        self.tasks = list(tasks)
        self.options = options
        self.semantics = SemanticsConfig(options.epsilon, mode=Mode.SMOOTHED)
        self.formulas = [instantiate(formula, t.map) for t in self.tasks]
        self.maps = map_tensor([t.map for t in self.tasks]) * 255.0
        self.extent = torch.tensor([t.map.extent for t in self.tasks], dtype=torch.float64)

    def __call__(self, pattern_logits: torch.Tensor, mask_logits: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        delta = 255.0 * torch.sigmoid(pattern_logits)
        mask = torch.sigmoid(mask_logits)
        perturbed = (mask * self.maps + (1.0 - mask) * delta) / 255.0
        horizon = self.options.horizon
        if self.model.kind == SAMPLER:
            starts = torch.as_tensor(np.stack([t.start for t in self.tasks]))
            goals = torch.as_tensor(np.stack([t.goal for t in self.tasks]))
            paths = rollout_sampler(self.model, perturbed, starts, goals, horizon, self.extent).unbind(0)
        else:
            paths = [fit_horizon_tensor(soft_unroll_astar(self.model, task, self.options.temperature,
                                                          weight=self.options.guidance_weight,
                                                          map_input=perturbed[i:i + 1]).states, horizon)
                     for i, task in enumerate(self.tasks)]
        raw = torch.stack([robustness_tensor(f, p, self.semantics)
                           for f, p in zip(self.formulas, paths)]).mean()
        penalized = raw - self.options.mu * (1.0 - mask).abs().sum()
        return penalized, raw


def invert_trigger(model: PlannerNet, formula: Formula, tasks: Sequence[PlanTask],
                   options: Optional[InversionOptions] = None,
                   true_trigger: Optional[TriggerPattern] = None) -> InversionResult:
    """Gradient ascent over pattern and mask logits with a backtracking step size.

    A step is only accepted when the penalized objective does not decrease, so
    the objective trace is monotonically non-decreasing.
    """
    options = options or InversionOptions()
    if not tasks:
        raise ValueError("trigger inversion needs at least one clean task")
    objective = _InversionObjective(model, formula, tasks, options)
    shape = tasks[0].map.shape
    gen = torch.Generator().manual_seed(options.seed)
    pattern_logits = (torch.rand(shape, generator=gen, dtype=torch.float64) - 0.5).requires_grad_(True)
    mask_logits = torch.full(shape, options.mask_init, dtype=torch.float64, requires_grad=True)
    for p in model.parameters():
        p.requires_grad_(False)

    try:
        value, raw = objective(pattern_logits, mask_logits)
        trace = [float(value)]
        lr = options.lr
        for step in range(options.steps):
            if not torch.isfinite(value):
                raise NonFiniteError(f"non-finite inversion objective at step {step}")
            g_pattern, g_mask = torch.autograd.grad(value, [pattern_logits, mask_logits])
            if not (torch.all(torch.isfinite(g_pattern)) and torch.all(torch.isfinite(g_mask))):
                raise NonFiniteError(f"non-finite inversion gradient at step {step}")
            accepted = False
            for _ in range(options.max_backtracks):
                with torch.no_grad():
                    cand_pattern = (pattern_logits + lr * g_pattern).requires_grad_(True)
                    cand_mask = (mask_logits + lr * g_mask).requires_grad_(True)
                cand_value, cand_raw = objective(cand_pattern, cand_mask)
                if torch.isfinite(cand_value) and float(cand_value) >= trace[-1]:
                    pattern_logits, mask_logits = cand_pattern, cand_mask
                    value, raw = cand_value, cand_raw
                    trace.append(float(value))
                    lr *= 1.5
                    accepted = True
                    break
                lr *= 0.5
            if not accepted:
                logger.debug(f"Inversion converged after {step} steps (no ascent step found)")
                break
            if step % 20 == 0:
                logger.debug(f"Inversion step {step}: objective={trace[-1]:.5f} raw={float(raw):.5f}")
    finally:
        for p in model.parameters():
            p.requires_grad_(True)

    result = InversionResult(
        pattern=(255.0 * torch.sigmoid(pattern_logits)).detach().numpy(),
        mask=torch.sigmoid(mask_logits).detach().numpy(),
        objective_trace=trace,
        raw_objective=float(raw),
    )
    if true_trigger is not None:
        rows, cols = true_trigger.window()
        result.avg_l1 = inversion_metric(true_trigger.trigger_image()[rows, cols],
                                         result.trigger_image[rows, cols])
    logger.info(f"Inversion: area={result.area} raw={result.raw_objective:.4f} avg_l1={result.avg_l1}")
    return result


# ---------------------------------------------------------------------------
# Input reconstruction
# ---------------------------------------------------------------------------

@dataclass
class ReconstructOptions:
    positions_per_map: int = 64
    epochs: int = 5
    lr: float = 1e-3
    batch_size: int = 16
    hidden: int = 256
    identity: bool = False
    seed: int = 0

    @classmethod
    def from_config(cls, config: Dict[str, Any], **overrides) -> 'ReconstructOptions':
        section = config.get('defense', {}).get('reconstruct', {})
        values = dict(
            positions_per_map=int(section.get('positions_per_map', 64)),
            epochs=int(section.get('epochs', 5)),
            lr=float(section.get('lr', 1e-3)),
            batch_size=int(config.get('training', {}).get('batch_size', 16)),
            hidden=int(section.get('hidden', 256)),
            seed=int(config.get('project', {}).get('seed', 0)),
        )
        values.update(overrides)
        return cls(**values)


class Preprocessor:
    """Reconstructs maps with a trained autoencoder before they reach the planner"""

    def __init__(self, autoencoder: MapAutoencoder):
        self.autoencoder = autoencoder

    def __call__(self, grid_map: GridMap) -> GridMap:
        with torch.no_grad():
            out = self.autoencoder(map_tensor(grid_map))[0].numpy()
        return grid_map.with_intensity(np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8))

    def reconstruction_error(self, maps: Sequence[GridMap]) -> float:
        """Mean per-pixel L1 on the [0, 1] scale"""
        with torch.no_grad():
            x = map_tensor(list(maps))
            return float((self.autoencoder(x) - x).abs().mean())


def reconstruct_input_defense(maps: Sequence[GridMap], trigger: TriggerPattern,
                              options: Optional[ReconstructOptions] = None) -> Tuple[Preprocessor, TrainResult]:
    """Train an autoencoder mapping randomly triggered maps back to their clean version.

    Only the trigger's shape, size and value are used; its anchor is re-drawn for
    every training pair. identity=True trains clean -> clean only.
    """
    options = options or ReconstructOptions()
    maps = list(maps)
    if not maps:
        raise ValueError("reconstruction defense needs training maps")
    autoencoder = MapAutoencoder(maps[0].shape, options.hidden, options.seed)
    clean = map_tensor(maps)
    per_map = 1 if options.identity else options.positions_per_map
    n_items = len(maps) * per_map

    def triggered(item: int) -> np.ndarray:
        i, k = divmod(item, per_map)
        if options.identity:
            return maps[i].intensity
        rng = np.random.default_rng([options.seed, i, k])
        anchor = random_anchor(rng, trigger.size, trigger.map_shape)
        trig = make_trigger(trigger.shape, anchor, trigger.size, trigger.value, trigger.map_shape)
        return insert_trigger(maps[i], trig).intensity

    def loss_fn(model, idx, step):
        x = torch.as_tensor(np.stack([triggered(j) for j in idx]).astype(np.float64) / 255.0)
        target = clean[[j // per_map for j in idx]]
        return (model(x) - target).abs().mean()

    train_options = TrainOptions(epochs=options.epochs, lr=options.lr, batch_size=options.batch_size,
                                 seed=options.seed, optimizer='adam', name='autoencoder')
    logger.info(f"Training reconstruction autoencoder on {n_items} pairs")
    result = fit(autoencoder, n_items, loss_fn, train_options)
    return Preprocessor(autoencoder), result
