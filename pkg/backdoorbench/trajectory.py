"""
Fixed-length state sequences that formulas are evaluated on
"""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import torch


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States s_0..s_T in meters, shape (T+1, d)"""

    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim == 1:
            states = states.reshape(1, -1)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError(f"Trajectory needs shape (T+1, d), got {states.shape}")
        if not np.all(np.isfinite(states)):
            raise ValueError("Trajectory contains non-finite coordinates")
        object.__setattr__(self, 'states', states)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def length(self) -> float:
        return path_length(self.states)

    def as_tensor(self, requires_grad: bool = False) -> torch.Tensor:
        return torch.tensor(self.states, dtype=torch.float64, requires_grad=requires_grad)

    def to_list(self):
        return self.states.tolist()

    def __eq__(self, other):
        return isinstance(other, Trajectory) and np.array_equal(self.states, other.states)


TrajectoryLike = Union[Trajectory, np.ndarray, torch.Tensor, Sequence[Sequence[float]]]


def path_length(states: np.ndarray) -> float:
    """Sum of segment lengths"""
    states = np.asarray(states, dtype=np.float64)
    if len(states) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(states, axis=0), axis=1)))


def resample_arclength(states: np.ndarray, n_states: int) -> np.ndarray:
    """Resample a polyline to n_states points equally spaced in arc length"""
    states = np.asarray(states, dtype=np.float64)
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if len(states) == 1:
        return np.repeat(states, n_states, axis=0)
    seg = np.linalg.norm(np.diff(states, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(states[:1], n_states, axis=0)
    targets = np.linspace(0.0, total, n_states)
    out = np.empty((n_states, states.shape[1]))
    for k in range(states.shape[1]):
        out[:, k] = np.interp(targets, cum, states[:, k])
    # endpoints exactly
    out[0] = states[0]
    out[-1] = states[-1]
    return out


def fit_horizon(states: np.ndarray, horizon: int) -> np.ndarray:
    """Bring a planner output to exactly horizon+1 states.

    Shorter outputs hold their last state; longer ones are arc-length resampled.
    """
    states = np.asarray(states, dtype=np.float64)
    n = horizon + 1
    if len(states) == n:
        return states.copy()
    if len(states) < n:
        pad = np.repeat(states[-1:], n - len(states), axis=0)
        return np.concatenate([states, pad], axis=0)
    return resample_arclength(states, n)


def fit_horizon_tensor(states: torch.Tensor, horizon: int) -> torch.Tensor:
    """fit_horizon on a (n, d) tensor; gradients flow through the states, the
    arc-length interpolation weights are held fixed"""
    n = horizon + 1
    m = states.shape[0]
    if m == n:
        return states
    if m < n:
        return torch.cat([states, states[-1:].expand(n - m, -1)], dim=0)
    with torch.no_grad():
        seg = torch.linalg.norm(states[1:] - states[:-1], dim=-1)
        cum = torch.cat([torch.zeros(1, dtype=states.dtype), torch.cumsum(seg, dim=0)])
        total = float(cum[-1])
        if total == 0.0:
            return states[:1].expand(n, -1).clone()
        targets = torch.linspace(0.0, total, n, dtype=states.dtype)
        idx = (torch.searchsorted(cum, targets, right=True) - 1).clamp(0, m - 2)
        frac = ((targets - cum[idx]) / (cum[idx + 1] - cum[idx]).clamp_min(1e-12)).clamp(0.0, 1.0)
    out = states[idx] + frac[:, None] * (states[idx + 1] - states[idx])
    return torch.cat([states[:1], out[1:-1], states[-1:]], dim=0)


def as_states_tensor(trajectory: TrajectoryLike) -> torch.Tensor:
    """Coerce any trajectory-like input to a float64 tensor of shape (T+1, d)"""
    if isinstance(trajectory, Trajectory):
        return trajectory.as_tensor()
    if isinstance(trajectory, torch.Tensor):
        return trajectory if trajectory.dtype == torch.float64 else trajectory.double()
    return Trajectory(np.asarray(trajectory, dtype=np.float64)).as_tensor()
