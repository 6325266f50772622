"""
Predicates: signed boundary functions over states, negative inside their region.

Instantiated predicates evaluate on tensors so that robustness can be
differentiated through them; templates (`around`, `behind`, `obs`) only carry
parameters until they are bound to a map.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .sdf import SignedDistanceField


class FormulaError(ValueError):
    """Base error of the specification language"""


class TemplateError(FormulaError):
    """A predicate template was evaluated before instantiation"""


def _num(x: float) -> str:
    return repr(float(x))


def safe_norm(v: torch.Tensor) -> torch.Tensor:
    """Euclidean norm over the last axis with a zero gradient at the origin"""
    sq = (v * v).sum(dim=-1)
    positive = sq > 0
    return torch.where(positive, torch.sqrt(torch.where(positive, sq, torch.ones_like(sq))),
                       torch.zeros_like(sq))


class Predicate(ABC):
    """State -> real, negative inside the target region"""

    is_template = False

    @abstractmethod
    def value(self, states: torch.Tensor) -> torch.Tensor:
        """Evaluate on states of shape (..., d); returns shape (...)"""

    @abstractmethod
    def to_text(self) -> str:
        """Concrete syntax"""

    def __call__(self, state) -> float:
        t = torch.as_tensor(np.asarray(state, dtype=np.float64))
        return float(self.value(t))

    def center(self) -> Optional[np.ndarray]:
        """Representative interior point, used to seed solvers and renderers"""
        return None


@dataclass(frozen=True)
class Ball(Predicate):
    """Disk ||s - c|| - r"""

    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("ball radius must be >= 0")

    def value(self, states: torch.Tensor) -> torch.Tensor:
        c = torch.tensor([self.cx, self.cy], dtype=torch.float64)
        return safe_norm(states[..., :2] - c) - self.r

    def to_text(self) -> str:
        return f"ball({_num(self.cx)}, {_num(self.cy)}, {_num(self.r)})"

    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])


@dataclass(frozen=True)
class Box(Predicate):
    """Exact signed distance to the axis-aligned box [x0, x1] x [y0, y1]"""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError("box corners must satisfy x0 <= x1 and y0 <= y1")

    def value(self, states: torch.Tensor) -> torch.Tensor:
        center = torch.tensor([(self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2], dtype=torch.float64)
        half = torch.tensor([(self.x1 - self.x0) / 2, (self.y1 - self.y0) / 2], dtype=torch.float64)
        q = torch.abs(states[..., :2] - center) - half
        outside = safe_norm(torch.clamp(q, min=0.0))
        inside = torch.clamp(torch.max(q, dim=-1).values, max=0.0)
        return outside + inside

    def to_text(self) -> str:
        return f"box({_num(self.x0)}, {_num(self.y0)}, {_num(self.x1)}, {_num(self.y1)})"

    def center(self) -> np.ndarray:
        return np.array([(self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2])


@dataclass(frozen=True, eq=False)
class ObstacleField(Predicate):
    """Map SDF: negative inside obstacles, so avoid<.,.,obs> keeps states in free space"""

    field: SignedDistanceField

    def value(self, states: torch.Tensor) -> torch.Tensor:
        return self.field.interpolate(states[..., :2])

    def to_text(self) -> str:
        return "obs()"


class Template(Predicate):
    is_template = True

    def value(self, states: torch.Tensor) -> torch.Tensor:
        raise TemplateError(f"template {self.to_text()} must be instantiated against a map first")


@dataclass(frozen=True)
class Obstacles(Template):
    """obs(): bound to the SDF of the map at instantiation"""

    def to_text(self) -> str:
        return "obs()"


@dataclass(frozen=True)
class Around(Template):
    """Collision-free ball near alpha_p"""

    x: float
    y: float
    r: float = 1.0

    def to_text(self) -> str:
        return f"around({_num(self.x)}, {_num(self.y)}, {_num(self.r)})"

    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Behind(Template):
    """Ball on the north face of labeled obstacle alpha_obj"""

    obj: int
    r: float = 1.0

    def to_text(self) -> str:
        return f"behind({int(self.obj)}, {_num(self.r)})"

