"""
Trigger patterns and pixel-exact insertion: M' = m * M + (1 - m) * delta
"""

import enum
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from .world import FREE, GridMap


class TriggerError(ValueError):
    """Malformed trigger or trigger/map shape mismatch"""


class TriggerShape(enum.Enum):
    SQUARE = 'square'
    CIRCLE = 'circle'
    TRIANGLE = 'triangle'
    DIAMOND = 'diamond'

    @classmethod
    def parse(cls, value) -> 'TriggerShape':
        if isinstance(value, cls):
            return value
        aliases = {'sq': 'square', 'ci': 'circle', 'tri': 'triangle', 'di': 'diamond'}
        key = str(value).strip().lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise TriggerError(f"unknown trigger shape '{value}'") from None


def rasterize(shape: TriggerShape, size: int) -> np.ndarray:
    """Boolean (size, size) footprint of a shape inside its bounding box"""
    if size < 1:
        raise TriggerError(f"trigger size must be >= 1, got {size}")
    c = (size - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing='ij')
    dy, dx = ii - c, jj - c
    if shape is TriggerShape.SQUARE:
        return np.ones((size, size), dtype=bool)
    if shape is TriggerShape.DIAMOND:
        return np.abs(dx) + np.abs(dy) <= size / 2.0
    if shape is TriggerShape.CIRCLE:
        return dx ** 2 + dy ** 2 <= (size / 2.0) ** 2
    # apex on the top row, widening by one cell every row
    return np.abs(dx) <= (ii + 1) / 2.0


@dataclass(frozen=True, eq=False)
class TriggerPattern:
    """Full-map pattern and mask; mask is 0 on the footprint and 1 elsewhere"""

    pattern: np.ndarray
    mask: np.ndarray
    shape: TriggerShape
    anchor: Tuple[int, int]
    size: int
    value: int = FREE

    def __post_init__(self):
        if self.pattern.shape != self.mask.shape:
            raise TriggerError("pattern and mask shapes differ")
        if not np.isin(self.mask, (0, 1)).all():
            raise TriggerError("mask must be binary")

    @property
    def map_shape(self) -> Tuple[int, int]:
        return self.mask.shape

    @property
    def footprint(self) -> np.ndarray:
        return self.mask == 0

    @property
    def area(self) -> int:
        return int(self.footprint.sum())

    def window(self) -> Tuple[slice, slice]:
        """(rows, cols) of the bounding box"""
        x, y = self.anchor
        return slice(y, y + self.size), slice(x, x + self.size)

    def trigger_image(self) -> np.ndarray:
        """(1 - m) * delta as float on the 0-255 scale"""
        return (1 - self.mask).astype(np.float64) * self.pattern.astype(np.float64)

    def moved(self, anchor: Tuple[int, int]) -> 'TriggerPattern':
        return make_trigger(self.shape, anchor, self.size, self.value, self.map_shape)

    def to_dict(self) -> Dict[str, Any]:
        return {'shape': self.shape.value, 'anchor': list(self.anchor),
                'size': self.size, 'value': self.value}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], map_shape: Tuple[int, int]) -> 'TriggerPattern':
        return make_trigger(data['shape'], tuple(data['anchor']), int(data['size']),
                            int(data.get('value', FREE)), map_shape)

    def __eq__(self, other):
        return (isinstance(other, TriggerPattern)
                and np.array_equal(self.pattern, other.pattern)
                and np.array_equal(self.mask, other.mask))


def make_trigger(shape, anchor: Sequence[int], size: int, value: int = FREE,
                 map_shape: Tuple[int, int] = (32, 32)) -> TriggerPattern:
    """Trigger whose size x size bounding box has its top-left cell at anchor = (x, y)"""
    shape = TriggerShape.parse(shape)
    if not 0 <= int(value) <= 255:
        raise TriggerError(f"trigger value must be a byte, got {value}")
    x, y = int(anchor[0]), int(anchor[1])
    height, width = map_shape
    if x < 0 or y < 0 or x + size > width or y + size > height:
        raise TriggerError(f"trigger of size {size} at anchor ({x}, {y}) leaves the {width}x{height} map")

    mask = np.ones(map_shape, dtype=np.uint8)
    local = rasterize(shape, size)
    mask[y:y + size, x:x + size][local] = 0
    pattern = np.zeros(map_shape, dtype=np.uint8)
    pattern[mask == 0] = int(value)
    return TriggerPattern(pattern, mask, shape, (x, y), int(size), int(value))


def insert_trigger(grid_map: GridMap, trig: TriggerPattern) -> GridMap:
    """Byte-exact insertion; the input map is left untouched"""
    if grid_map.shape != trig.map_shape:
        raise TriggerError(f"trigger shape {trig.map_shape} does not match map shape {grid_map.shape}")
    m = trig.mask.astype(np.uint16)
    out = m * grid_map.intensity.astype(np.uint16) + (1 - m) * trig.pattern.astype(np.uint16)
    return grid_map.with_intensity(out.astype(np.uint8))


def random_anchor(rng: np.random.Generator, size: int, map_shape: Tuple[int, int]) -> Tuple[int, int]:
    height, width = map_shape
    return int(rng.integers(0, width - size + 1)), int(rng.integers(0, height - size + 1))


def trigger_from_config(config: Dict[str, Any], map_shape: Tuple[int, int],
                        **overrides) -> TriggerPattern:
    section = dict(config.get('trigger', {}))
    section.update({k: v for k, v in overrides.items() if v is not None})
    return make_trigger(section.get('shape', 'square'), tuple(section.get('anchor', (1, 1))),
                        int(section.get('size', 3)), int(section.get('value', FREE)), map_shape)
