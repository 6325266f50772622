"""
Desk-scale neural planners and the map autoencoder, plus versioned checkpoints
"""

import json
import logging
import math
import os
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from .planners import PlanTask
from .world import GridMap

logger = logging.getLogger('BackdoorBench.Models')

CHECKPOINT_VERSION = 1
SAMPLER = 'sampler'
GUIDANCE = 'guidance'
AUTOENCODER = 'autoencoder'


class NonFiniteError(ArithmeticError):
    """NaN or infinity in an input, loss or optimizer state"""


def init_uniform(module: nn.Module, generator: torch.Generator):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every Linear layer, in registration order"""
    for layer in module.modules():
        if isinstance(layer, nn.Linear):
            bound = 1.0 / math.sqrt(layer.in_features)
            with torch.no_grad():
                layer.weight.copy_((torch.rand(layer.weight.shape, generator=generator,
                                               dtype=torch.float64) * 2 - 1) * bound)
                layer.bias.copy_((torch.rand(layer.bias.shape, generator=generator,
                                             dtype=torch.float64) * 2 - 1) * bound)


def _mlp(sizes: Sequence[int]) -> nn.Sequential:
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1], dtype=torch.float64))
        if i < len(sizes) - 2:
            layers.append(nn.Tanh())
    return nn.Sequential(*layers)


class PlannerNet(nn.Module):
    """Map encoder + start-goal linear -> task embedding, then a sampler or guidance head"""

    def __init__(self, kind: str = SAMPLER, map_shape: Tuple[int, int] = (32, 32),
                 encoder_hidden: Sequence[int] = (128, 64), sg_hidden: int = 32,
                 head_hidden: Optional[int] = None, max_step: float = 0.6, seed: int = 0):
        super().__init__()
        if kind not in (SAMPLER, GUIDANCE):
            raise ValueError(f"unknown planner kind '{kind}'")
        self.kind = kind
        self.map_shape = tuple(map_shape)
        self.max_step = float(max_step)
        self.seed = int(seed)
        n_cells = self.map_shape[0] * self.map_shape[1]
        self.encoder_hidden = tuple(int(h) for h in encoder_hidden)
        self.sg_hidden = int(sg_hidden)
        emb = self.encoder_hidden[-1] + self.sg_hidden

        self.encoder = nn.Sequential(_mlp((n_cells,) + self.encoder_hidden), nn.Tanh())
        self.start_goal = nn.Sequential(nn.Linear(4, self.sg_hidden, dtype=torch.float64), nn.Tanh())
        if kind == SAMPLER:
            self.head_hidden = int(head_hidden or 64)
            self.decoder = _mlp((emb + 2, self.head_hidden, 2))
        else:
            self.head_hidden = int(head_hidden or 256)
            self.decoder = _mlp((emb, self.head_hidden, n_cells))

        init_uniform(self, torch.Generator().manual_seed(self.seed))

    @property
    def architecture(self) -> Dict[str, Any]:
        return {
            'type': self.kind,
            'map_shape': list(self.map_shape),
            'encoder_hidden': list(self.encoder_hidden),
            'sg_hidden': self.sg_hidden,
            'head_hidden': self.head_hidden,
            'max_step': self.max_step,
        }

    def zero_head(self):
        """Zero the last decoder layer: the sampler then stands still, guidance is 0.5 everywhere"""
        last = self.decoder[-1]
        with torch.no_grad():
            last.weight.zero_()
            last.bias.zero_()

    def embed(self, maps: torch.Tensor, s0: torch.Tensor, goal: torch.Tensor,
              extent: torch.Tensor) -> torch.Tensor:
        """maps (B, H, W) in [0, 1]; positions (B, 2) in meters; extent (2,) or (B, 2)"""
        z_map = self.encoder(maps.reshape(maps.shape[0], -1))
        z_sg = self.start_goal(torch.cat([s0 / extent, goal / extent], dim=-1))
        return torch.cat([z_map, z_sg], dim=-1)

    def step(self, emb: torch.Tensor, s_t: torch.Tensor, extent: torch.Tensor) -> torch.Tensor:
        """Next state s_t + max_step * tanh(decoder)"""
        out = self.decoder(torch.cat([emb, s_t / extent], dim=-1))
        return s_t + self.max_step * torch.tanh(out)

    def guidance(self, emb: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.decoder(emb)).reshape(-1, *self.map_shape)


class MapAutoencoder(nn.Module):
    """Flattened map -> hidden -> flattened map in (0, 1)"""

    def __init__(self, map_shape: Tuple[int, int] = (32, 32), hidden: int = 256, seed: int = 0):
        super().__init__()
        self.kind = AUTOENCODER
        self.map_shape = tuple(map_shape)
        self.hidden = int(hidden)
        self.seed = int(seed)
        n_cells = self.map_shape[0] * self.map_shape[1]
        self.net = nn.Sequential(nn.Linear(n_cells, self.hidden, dtype=torch.float64), nn.Tanh(),
                                 nn.Linear(self.hidden, n_cells, dtype=torch.float64))
        init_uniform(self, torch.Generator().manual_seed(self.seed))

    @property
    def architecture(self) -> Dict[str, Any]:
        return {'type': AUTOENCODER, 'map_shape': list(self.map_shape), 'hidden': self.hidden}

    def forward(self, maps: torch.Tensor) -> torch.Tensor:
        flat = maps.reshape(maps.shape[0], -1)
        return torch.sigmoid(self.net(flat)).reshape(-1, *self.map_shape)


Model = Union[PlannerNet, MapAutoencoder]


def build_model(architecture: Dict[str, Any], seed: int = 0) -> Model:
    kind = architecture['type']
    if kind == AUTOENCODER:
        return MapAutoencoder(tuple(architecture['map_shape']), architecture.get('hidden', 256), seed)
    return PlannerNet(kind, tuple(architecture['map_shape']),
                      architecture.get('encoder_hidden', (128, 64)),
                      architecture.get('sg_hidden', 32),
                      architecture.get('head_hidden'),
                      architecture.get('max_step', 0.6), seed)


def model_from_config(config: Dict[str, Any], kind: Optional[str] = None, seed: int = 0) -> PlannerNet:
    section = config.get('model', {})
    world = config.get('world', {})
    return PlannerNet(
        kind or section.get('planner', SAMPLER),
        (int(world.get('height', 32)), int(world.get('width', 32))),
        section.get('encoder_hidden', (128, 64)),
        section.get('sg_hidden', 32),
        section.get('head_hidden'),
        float(config.get('planning', {}).get('max_step', 0.6)),
        seed,
    )


# ---------------------------------------------------------------------------
# Tensor conversion and forwards
# ---------------------------------------------------------------------------

def map_tensor(maps: Union[GridMap, Sequence[GridMap]]) -> torch.Tensor:
    """(B, H, W) intensities scaled to [0, 1]"""
    if isinstance(maps, GridMap):
        maps = [maps]
    return torch.as_tensor(np.stack([m.intensity for m in maps]).astype(np.float64) / 255.0)


def positions_tensor(p) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(p, dtype=np.float64)) if not isinstance(p, torch.Tensor) else p
    return t.reshape(-1, 2)


def extent_tensor(maps: Union[GridMap, Sequence[GridMap]]) -> torch.Tensor:
    if isinstance(maps, GridMap):
        maps = [maps]
    return torch.tensor([m.extent for m in maps], dtype=torch.float64)


def _check_finite(*tensors: torch.Tensor):
    for t in tensors:
        if not torch.all(torch.isfinite(t)):
            raise NonFiniteError("non-finite model input")


def _map_inputs(maps, extent=None) -> Tuple[torch.Tensor, torch.Tensor]:
    """GridMaps, or an already scaled (B, H, W) tensor together with its extent"""
    if isinstance(maps, torch.Tensor):
        if extent is None:
            raise ValueError("extent is required when maps are given as a tensor")
        return maps, torch.as_tensor(extent, dtype=torch.float64).reshape(-1, 2)
    return map_tensor(maps), extent_tensor(maps)


def forward_sampler(model: PlannerNet, maps, s0, goal, s_t, extent=None) -> torch.Tensor:
    """Next state, shape (B, 2); differentiable w.r.t. parameters and s_t"""
    m, extent = _map_inputs(maps, extent)
    s0, goal, s_t = positions_tensor(s0), positions_tensor(goal), positions_tensor(s_t)
    _check_finite(m, s0, goal, s_t)
    emb = model.embed(m, s0, goal, extent)
    return model.step(emb, s_t, extent)


def forward_guidance(model: PlannerNet, maps, s0, goal, extent=None) -> torch.Tensor:
    """Guidance grid in (0, 1), shape (B, H, W)"""
    m, extent = _map_inputs(maps, extent)
    s0, goal = positions_tensor(s0), positions_tensor(goal)
    _check_finite(m, s0, goal)
    return model.guidance(model.embed(m, s0, goal, extent))


def rollout_sampler(model: PlannerNet, maps, s0, goal, horizon: int, extent=None) -> torch.Tensor:
    """Closed-loop rollout of T steps from s0, shape (B, T+1, 2); differentiable end to end"""
    m, extent = _map_inputs(maps, extent)
    s0, goal = positions_tensor(s0), positions_tensor(goal)
    _check_finite(m, s0, goal)
    emb = model.embed(m, s0, goal, extent)
    states = [s0]
    for _ in range(horizon):
        states.append(model.step(emb, states[-1], extent))
    return torch.stack(states, dim=1)


def euclidean_grid(grid_map: GridMap, goal) -> np.ndarray:
    """Cell-center distance to goal, same formula as the A* default heuristic"""
    centers = grid_map.cell_centers()
    dx = centers[..., 0] - float(goal[0])
    dy = centers[..., 1] - float(goal[1])
    return np.sqrt(dx * dx + dy * dy)


def guidance_heuristic(model: PlannerNet, task: PlanTask, weight: float = 1.0) -> np.ndarray:
    """euclid(s, g) * (1 + w * guidance(s)) on every cell"""
    with torch.no_grad():
        guide = forward_guidance(model, task.map, task.start, task.goal)[0].numpy()
    return euclidean_grid(task.map, task.goal) * (1.0 + weight * guide)


# ---------------------------------------------------------------------------
# Checkpoints: one JSON header line followed by a little-endian f64 blob
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path: str, epoch: int = 0, extra: Optional[Dict[str, Any]] = None) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    state = model.state_dict()
    header = {
        'version': CHECKPOINT_VERSION,
        'architecture': model.architecture,
        'seed': model.seed,
        'epoch': int(epoch),
        'params': [[name, list(t.shape)] for name, t in state.items()],
    }
    if extra:
        header['extra'] = extra
    blob = b''.join(t.detach().cpu().to(torch.float64).numpy().astype('<f8').tobytes()
                    for t in state.values())
    with open(path, 'wb') as f:
        f.write(json.dumps(header, sort_keys=True).encode('utf-8') + b'\n')
        f.write(blob)
    logger.debug(f"Saved checkpoint {path} (epoch {epoch})")
    return path


def read_checkpoint_header(path: str) -> Dict[str, Any]:
    with open(path, 'rb') as f:
        return json.loads(f.readline().decode('utf-8'))


def load_checkpoint(path: str) -> Model:
    with open(path, 'rb') as f:
        header = json.loads(f.readline().decode('utf-8'))
        blob = f.read()
    if header.get('version') != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')} in {path}")
    model = build_model(header['architecture'], header.get('seed', 0))
    flat = np.frombuffer(blob, dtype='<f8')
    state = {}
    offset = 0
    for name, shape in header['params']:
        n = int(np.prod(shape)) if shape else 1
        if offset + n > len(flat):
            raise ValueError(f"truncated checkpoint {path}")
        state[name] = torch.from_numpy(flat[offset:offset + n].astype(np.float64).reshape(shape))
        offset += n
    model.load_state_dict(state)
    return model
