"""
Benign training of the neural planners, and the shared optimization loop
"""

import copy
import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import torch

from .datasets import Dataset, Record
from .models import GUIDANCE, NonFiniteError, PlannerNet, map_tensor, save_checkpoint
from .predicates import safe_norm
from .utils import ProgressTracker, ensure_dir
from .world import GridMap

logger = logging.getLogger('BackdoorBench.Training')

LossFn = Callable[[torch.nn.Module, Sequence[int], int], torch.Tensor]


class TrainingDivergedError(RuntimeError):
    """Non-finite loss; the model has been restored to its last good state"""

    def __init__(self, message: str, checkpoint: Optional[str] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainOptions:
    epochs: int = 10
    lr: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 16
    seed: int = 0
    optimizer: str = 'sgd'
    max_steps: Optional[int] = None
    checkpoint_dir: Optional[str] = None
    checkpoint_every: int = 1
    name: str = 'model'

    @classmethod
    def from_config(cls, config: Dict[str, Any], section: str = 'training', **overrides) -> 'TrainOptions':
        opts = config.get(section, {})
        values = dict(
            epochs=int(opts.get('epochs', 10)),
            lr=float(opts.get('lr', 1e-2)),
            momentum=float(opts.get('momentum', 0.9)),
            batch_size=int(opts.get('batch_size', 16)),
            seed=int(config.get('project', {}).get('seed', 0)),
            checkpoint_every=int(opts.get('checkpoint_every', 1)),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TrainResult:
    model: torch.nn.Module
    initial_loss: float
    final_loss: float
    losses: List[float] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.losses)

    def save_loss_curve(self, path: str) -> str:
        ensure_dir(os.path.dirname(path) or '.')
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(['step', 'loss'])
            for i, loss in enumerate(self.losses):
                writer.writerow([i, repr(loss)])
        return path


# ---------------------------------------------------------------------------
# Batches and benign losses
# ---------------------------------------------------------------------------

def path_mask(grid_map: GridMap, states: np.ndarray) -> np.ndarray:
    """Cells touched by the polyline, sampled at resolution / 2"""
    mask = np.zeros(grid_map.shape, dtype=np.float64)
    states = np.asarray(states, dtype=np.float64)
    points = [states[0]]
    for p, q in zip(states[:-1], states[1:]):
        n = int(np.ceil(np.linalg.norm(q - p) / (grid_map.resolution / 2.0))) + 1
        points.extend(p + s * (q - p) for s in np.linspace(0.0, 1.0, max(n, 2)))
    for p in points:
        if grid_map.in_bounds(p):
            mask[grid_map.cell_of(p)] = 1.0
    return mask


@dataclass
class Batch:
    maps: torch.Tensor
    extent: torch.Tensor
    start: torch.Tensor
    goal: torch.Tensor
    traj: torch.Tensor
    grid_maps: List[GridMap]

    @classmethod
    def from_records(cls, dataset: Dataset, records: Sequence[Record]) -> 'Batch':
        grid_maps = [dataset.get_map(r) for r in records]
        lengths = {r.traj.shape[0] for r in records}
        if len(lengths) != 1:
            raise ValueError(f"records in a batch must share a horizon, got lengths {sorted(lengths)}")
        return cls(
            maps=map_tensor(grid_maps),
            extent=torch.tensor([m.extent for m in grid_maps], dtype=torch.float64),
            start=torch.as_tensor(np.stack([r.start for r in records])),
            goal=torch.as_tensor(np.stack([r.goal for r in records])),
            traj=torch.as_tensor(np.stack([r.traj for r in records])),
            grid_maps=grid_maps,
        )

    def __len__(self) -> int:
        return self.maps.shape[0]

    def cost_targets(self) -> torch.Tensor:
        """1 - path_mask per item: low along the demonstration"""
        masks = [path_mask(m, t) for m, t in zip(self.grid_maps, self.traj.numpy())]
        return torch.as_tensor(1.0 - np.stack(masks))


def sampler_loss(model: PlannerNet, batch: Batch) -> torch.Tensor:
    """Teacher-forced mean distance between predicted and demonstrated next states"""
    emb = model.embed(batch.maps, batch.start, batch.goal, batch.extent)
    steps = batch.traj.shape[1] - 1
    emb = emb.repeat_interleave(steps, dim=0)
    extent = batch.extent.repeat_interleave(steps, dim=0)
    s_t = batch.traj[:, :-1].reshape(-1, 2)
    target = batch.traj[:, 1:].reshape(-1, 2)
    pred = model.step(emb, s_t, extent)
    return safe_norm(pred - target).mean()


def guidance_loss(model: PlannerNet, batch: Batch, targets: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean L1 between the guidance grid and the target cost map"""
    guide = model.guidance(model.embed(batch.maps, batch.start, batch.goal, batch.extent))
    targets = batch.cost_targets() if targets is None else targets
    return (guide - targets).abs().mean()


def benign_loss(model: PlannerNet, batch: Batch) -> torch.Tensor:
    if model.kind == GUIDANCE:
        return guidance_loss(model, batch)
    return sampler_loss(model, batch)


def dataset_loss(model: PlannerNet, dataset: Dataset, batch_size: int = 64) -> float:
    """Record-weighted mean benign loss over the whole dataset, no gradient"""
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(dataset), batch_size):
            records = dataset.records[i:i + batch_size]
            total += float(benign_loss(model, Batch.from_records(dataset, records))) * len(records)
    return total / max(len(dataset), 1)


# ---------------------------------------------------------------------------
# Optimization loop
# ---------------------------------------------------------------------------

def make_optimizer(params, options: TrainOptions) -> torch.optim.Optimizer:
    if options.optimizer == 'adam':
        return torch.optim.Adam(params, lr=options.lr)
    if options.optimizer == 'sgd':
        return torch.optim.SGD(params, lr=options.lr, momentum=options.momentum)
    raise ValueError(f"unknown optimizer '{options.optimizer}'")


def fit(model: torch.nn.Module, n_items: int, loss_fn: LossFn, options: TrainOptions) -> TrainResult:
    """Minibatch descent over item indices shuffled per epoch from options.seed.

    loss_fn(model, indices, step) returns the scalar loss of one minibatch.
    A non-finite loss restores the last good state and raises TrainingDivergedError.
    """
    if n_items <= 0:
        raise ValueError("cannot train on an empty item set")
    rng = np.random.default_rng(options.seed)
    optimizer = make_optimizer(model.parameters(), options)
    n_batches = int(np.ceil(n_items / options.batch_size))
    total_steps = options.epochs * n_batches
    if options.max_steps is not None:
        total_steps = min(total_steps, options.max_steps)

    result = TrainResult(model, initial_loss=float('nan'), final_loss=float('nan'))
    last_good = copy.deepcopy(model.state_dict())
    last_checkpoint = None
    progress = ProgressTracker(total_steps, f"Training {options.name}", every=max(1, total_steps // 10),
                               logger=logger)
    step = 0
    epoch = 0
    model.train()
    while step < total_steps:
        order = rng.permutation(n_items)
        epoch_total = 0.0
        epoch_steps = 0
        for b in range(n_batches):
            if step >= total_steps:
                break
            idx = order[b * options.batch_size:(b + 1) * options.batch_size].tolist()
            optimizer.zero_grad()
            loss = loss_fn(model, idx, step)
            value = float(loss.detach())
            if not np.isfinite(value):
                model.load_state_dict(last_good)
                logger.error(f"{options.name}: non-finite loss at step {step}, restored epoch {epoch} state")
                raise TrainingDivergedError(f"non-finite loss at step {step}", last_checkpoint)
            loss.backward()
            optimizer.step()
            if step == 0:
                result.initial_loss = value
            result.losses.append(value)
            epoch_total += value
            epoch_steps += 1
            step += 1
            progress.update(loss=value)
        epoch += 1
        result.epoch_losses.append(epoch_total / max(epoch_steps, 1))
        if not all(torch.all(torch.isfinite(p)) for p in model.parameters()):
            model.load_state_dict(last_good)
            raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}", last_checkpoint)
        last_good = copy.deepcopy(model.state_dict())
        if options.checkpoint_dir and epoch % max(1, options.checkpoint_every) == 0:
            path = os.path.join(options.checkpoint_dir, f"{options.name}_epoch{epoch:03d}.ckpt")
            last_checkpoint = save_checkpoint(model, path, epoch, {'loss': result.epoch_losses[-1]})
            result.checkpoints.append(last_checkpoint)
        logger.debug(f"{options.name}: epoch {epoch} mean loss {result.epoch_losses[-1]:.6f}")

    model.eval()
    if result.losses:
        result.final_loss = result.losses[-1]
    progress.complete()
    return result


def train_benign(model: PlannerNet, dataset: Dataset, options: Optional[TrainOptions] = None) -> TrainResult:
    """Fit the planner to the demonstrations of the train split"""
    options = options or TrainOptions()
    train = dataset.train()
    if len(train) == 0:
        raise ValueError("train split is empty")
    logger.info(f"Benign training of {model.kind} planner on {len(train)} demonstrations")

    def loss_fn(m, idx, step):
        return benign_loss(m, Batch.from_records(train, [train.records[i] for i in idx]))

    initial = dataset_loss(model, train)
    result = fit(model, len(train), loss_fn, options)
    result.initial_loss = initial
    result.final_loss = dataset_loss(model, train)
    if not np.isfinite(result.final_loss):
        raise NonFiniteError("final training loss is not finite")
    logger.info(f"Training loss {initial:.5f} -> {result.final_loss:.5f}")
    return result
