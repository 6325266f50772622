"""
Quantitative semantics of backdoor specifications.

Robustness is positive iff the trajectory satisfies the formula. In smoothed
mode every min/max is replaced by its log-sum-exp surrogate so gradients reach
all states rather than only the extremal one.
"""

import enum
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
import torch

from .formula import Formula, IntervalError, NodeKind
from .predicates import TemplateError
from .trajectory import TrajectoryLike, as_states_tensor

logger = logging.getLogger('BackdoorBench.Semantics')


class Mode(enum.Enum):
    DEFINITIONAL = 'definitional'
    SMOOTHED = 'smoothed'


@dataclass(frozen=True)
class SemanticsConfig:
    epsilon: float = 5.0
    top_value: float = 1.0
    mode: Mode = Mode.DEFINITIONAL

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.top_value > 0:
            raise ValueError(f"top_value must be > 0, got {self.top_value}")
        if isinstance(self.mode, str):
            object.__setattr__(self, 'mode', Mode(self.mode))

    def smoothed(self) -> 'SemanticsConfig':
        return SemanticsConfig(self.epsilon, self.top_value, Mode.SMOOTHED)

    def definitional(self) -> 'SemanticsConfig':
        return SemanticsConfig(self.epsilon, self.top_value, Mode.DEFINITIONAL)

    @classmethod
    def from_config(cls, config: Dict, mode: Mode = Mode.DEFINITIONAL) -> 'SemanticsConfig':
        section = config.get('semantics', {})
        return cls(float(section.get('epsilon', 5.0)), float(section.get('top_value', 1.0)), mode)


DEFINITIONAL = SemanticsConfig()
SMOOTHED = SemanticsConfig(mode=Mode.SMOOTHED)


# ---------------------------------------------------------------------------
# min / max reductions over the last axis
# ---------------------------------------------------------------------------

def hard_max(x: torch.Tensor) -> torch.Tensor:
    """Max over the last axis; the (sub)gradient goes to the first maximiser"""
    idx = torch.argmax(x, dim=-1, keepdim=True)
    return torch.gather(x, -1, idx).squeeze(-1)


def hard_min(x: torch.Tensor) -> torch.Tensor:
    idx = torch.argmin(x, dim=-1, keepdim=True)
    return torch.gather(x, -1, idx).squeeze(-1)


def soft_max(x: torch.Tensor, epsilon: float) -> torch.Tensor:
    """(1/eps) log sum exp(eps x) over the last axis, max-shifted"""
    m = torch.max(x, dim=-1, keepdim=True).values.detach()
    return m.squeeze(-1) + torch.log(torch.sum(torch.exp(epsilon * (x - m)), dim=-1)) / epsilon


def soft_min(x: torch.Tensor, epsilon: float) -> torch.Tensor:
    return -soft_max(-x, epsilon)


def smooth_max(values: Sequence[float], epsilon: float) -> float:
    if len(values) == 0:
        raise ValueError("smooth_max of an empty list")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return float(soft_max(torch.as_tensor(np.asarray(values, dtype=np.float64)), epsilon))


def smooth_min(values: Sequence[float], epsilon: float) -> float:
    if len(values) == 0:
        raise ValueError("smooth_min of an empty list")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    return float(soft_min(torch.as_tensor(np.asarray(values, dtype=np.float64)), epsilon))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class _Evaluator:
    """Memoised rho(node, t) over states of shape (..., T+1, d)"""

    def __init__(self, states: torch.Tensor, config: SemanticsConfig):
        self.states = states
        self.horizon = states.shape[-2] - 1
        self.batch_shape = states.shape[:-2]
        self.config = config
        if config.mode is Mode.SMOOTHED:
            eps = config.epsilon
            self._max: Callable = lambda x: soft_max(x, eps)
            self._min: Callable = lambda x: soft_min(x, eps)
        else:
            self._max = hard_max
            self._min = hard_min
        self._cache: Dict[Tuple[int, int], torch.Tensor] = {}
        self._pred_cache: Dict[int, torch.Tensor] = {}

    def _const(self, value: float) -> torch.Tensor:
        return torch.full(self.batch_shape, value, dtype=torch.float64)

    def _window(self, node: Formula, t: int) -> range:
        lo, hi = t + node.a, t + node.b
        if hi > self.horizon:
            raise IntervalError(
                f"{node.kind.value}[{node.a},{node.b}] at t={t} needs index {hi} "
                f"but the trajectory horizon is {self.horizon}"
            )
        return range(lo, hi + 1)

    def _predicate_signal(self, node: Formula) -> torch.Tensor:
        """P(s_t) for all t, shape (..., T+1)"""
        key = id(node.predicate)
        if key not in self._pred_cache:
            if node.predicate.is_template:
                raise TemplateError(f"uninstantiated template {node.predicate.to_text()}")
            self._pred_cache[key] = node.predicate.value(self.states)
        return self._pred_cache[key]

    def rho(self, node: Formula, t: int) -> torch.Tensor:
        key = (id(node), t)
        if key not in self._cache:
            self._cache[key] = self._rho(node, t)
        return self._cache[key]

    def _rho(self, node: Formula, t: int) -> torch.Tensor:
        kind = node.kind
        k = self.config.top_value

        if kind is NodeKind.TRUE:
            return self._const(k)
        if kind is NodeKind.FALSE:
            return self._const(-k)
        if kind is NodeKind.PREDICATE:
            if t > self.horizon:
                raise IntervalError(f"predicate read at t={t} beyond horizon {self.horizon}")
            return -self._predicate_signal(node)[..., t]

        if kind in (NodeKind.REACH, NodeKind.AVOID, NodeKind.STAY):
            window = self._window(node, t)
            values = self._predicate_signal(node)[..., window.start:window.stop]
            if kind is NodeKind.REACH:
                return -self._min(values)
            if kind is NodeKind.AVOID:
                return self._min(values)
            return -self._max(values)

        if kind is NodeKind.NOT:
            return -self.rho(node.children[0], t)
        if kind is NodeKind.NEXT:
            return self.rho(node.children[0], t + 1)

        if kind in (NodeKind.AND, NodeKind.OR, NodeKind.IMPLIES):
            lhs = self.rho(node.children[0], t)
            rhs = self.rho(node.children[1], t)
            if kind is NodeKind.AND:
                return self._min(torch.stack([lhs, rhs], dim=-1))
            if kind is NodeKind.OR:
                return self._max(torch.stack([lhs, rhs], dim=-1))
            return self._max(torch.stack([-lhs, rhs], dim=-1))

        if kind in (NodeKind.EVENTUALLY, NodeKind.GLOBALLY):
            window = self._window(node, t)
            values = torch.stack([self.rho(node.children[0], i) for i in window], dim=-1)
            return self._max(values) if kind is NodeKind.EVENTUALLY else self._min(values)

        if kind is NodeKind.UNTIL:
            window = self._window(node, t)
            phi, psi = node.children
            terms = []
            for t_prime in window:
                if t_prime == window.start:
                    # vacuous prefix
                    inner = self._const(k)
                else:
                    inner = self._min(torch.stack(
                        [self.rho(phi, i) for i in range(window.start, t_prime)], dim=-1))
                terms.append(self._min(torch.stack([self.rho(psi, t_prime), inner], dim=-1)))
            return self._max(torch.stack(terms, dim=-1))

        raise ValueError(f"unhandled node kind {kind}")


def robustness_tensor(formula: Formula, states: torch.Tensor,
                      config: SemanticsConfig = DEFINITIONAL) -> torch.Tensor:
    """Robustness at t=0 for states of shape (..., T+1, d); differentiable"""
    if states.dim() < 2:
        raise ValueError(f"states need shape (..., T+1, d), got {tuple(states.shape)}")
    horizon = states.shape[-2] - 1
    needed = formula.max_time()
    if needed > horizon:
        raise IntervalError(f"formula reads up to t={needed} but the trajectory horizon is {horizon}")
    if not formula.is_instantiated():
        raise TemplateError("formula contains uninstantiated templates")
    return _Evaluator(states, config).rho(formula, 0)


def robustness(formula: Formula, trajectory: TrajectoryLike,
               config: SemanticsConfig = DEFINITIONAL) -> float:
    states = as_states_tensor(trajectory).detach()
    with torch.no_grad():
        return float(robustness_tensor(formula, states, config))


def robustness_grad(formula: Formula, trajectory: TrajectoryLike,
                    config: SemanticsConfig = SMOOTHED) -> np.ndarray:
    """d rho / d s_t for every state, shape (T+1, d)"""
    if config.mode is Mode.DEFINITIONAL:
        logger.debug("Definitional-mode gradient is a subgradient through hard min/max")
    states = as_states_tensor(trajectory).detach().clone().requires_grad_(True)
    value = robustness_tensor(formula, states, config)
    grad, = torch.autograd.grad(value, states, allow_unused=True)
    if grad is None:
        return np.zeros(tuple(states.shape))
    return grad.detach().numpy().copy()


def satisfies(formula: Formula, trajectory: TrajectoryLike, top_value: float = 1.0) -> bool:
    """Definitional robustness > 0"""
    return robustness(formula, trajectory, SemanticsConfig(top_value=top_value)) > 0
