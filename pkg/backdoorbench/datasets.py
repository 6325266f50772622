"""
Demonstration datasets: JSONL records of (map, start, goal, trajectory)
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .map_io import load_map
from .planners import PlanTask
from .prm import prm_demos
from .triggers import TriggerPattern, insert_trigger
from .utils import ensure_dir
from .world import GridMap

logger = logging.getLogger('BackdoorBench.Datasets')

TRAIN = 'train'
TEST = 'test'
BENIGN = 'benign'
POISONED = 'poisoned'


class DatasetError(ValueError):
    """Malformed dataset or leaked test maps"""


@dataclass(frozen=True, eq=False)
class Record:
    map_id: str
    start: np.ndarray
    goal: np.ndarray
    traj: np.ndarray
    split: str = TRAIN
    provenance: str = BENIGN
    trigger: Optional[Dict[str, Any]] = None
    map_path: Optional[str] = None

    def __post_init__(self):
        for name in ('start', 'goal', 'traj'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.split not in (TRAIN, TEST):
            raise DatasetError(f"unknown split '{self.split}'")
        if self.traj.ndim != 2 or self.traj.shape[1] != 2:
            raise DatasetError(f"trajectory must have shape (T+1, 2), got {self.traj.shape}")

    @property
    def is_poisoned(self) -> bool:
        return self.provenance == POISONED

    def to_json(self, map_ref: Optional[str] = None) -> Dict[str, Any]:
        out = {
            'map': map_ref or self.map_path or self.map_id,
            'map_id': self.map_id,
            'start': self.start.tolist(),
            'goal': self.goal.tolist(),
            'traj': self.traj.tolist(),
            'split': self.split,
            'provenance': self.provenance,
        }
        if self.trigger is not None:
            out['trigger'] = self.trigger
        return out


@dataclass
class Dataset:
    records: List[Record]
    maps: Dict[str, GridMap] = field(default_factory=dict)
    _triggered: Dict[Tuple[str, str], GridMap] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> 'Dataset':
        return Dataset([r for r in self.records if r.split == name], self.maps)

    def train(self) -> 'Dataset':
        return self.split(TRAIN)

    def test(self) -> 'Dataset':
        return self.split(TEST)

    def map_ids(self) -> List[str]:
        return sorted({r.map_id for r in self.records})

    def get_map(self, record: Record) -> GridMap:
        """Map of a record, with the record's trigger inserted if it has one"""
        if record.map_id not in self.maps:
            raise DatasetError(f"map '{record.map_id}' is not loaded")
        base = self.maps[record.map_id]
        if record.trigger is None:
            return base
        key = (record.map_id, json.dumps(record.trigger, sort_keys=True))
        if key not in self._triggered:
            trig = TriggerPattern.from_dict(record.trigger, base.shape)
            self._triggered[key] = insert_trigger(base, trig)
        return self._triggered[key]

    def task(self, record: Record, horizon: Optional[int] = None, goal_tol: float = 0.3) -> PlanTask:
        horizon = record.traj.shape[0] - 1 if horizon is None else horizon
        return PlanTask(self.get_map(record), record.start, record.goal, horizon, goal_tol=goal_tol)

    def merged(self, other: 'Dataset') -> 'Dataset':
        maps = dict(self.maps)
        maps.update(other.maps)
        return Dataset(self.records + other.records, maps)

    def validate_splits(self):
        """Test maps never appear in the train split"""
        train_ids = {r.map_id for r in self.records if r.split == TRAIN}
        test_ids = {r.map_id for r in self.records if r.split == TEST}
        leaked = train_ids & test_ids
        if leaked:
            raise DatasetError(f"maps in both train and test splits: {sorted(leaked)[:5]}")


def split_map_ids(map_ids: Sequence[str], ratio: float = 19.0, seed: int = 0) -> Tuple[List[str], List[str]]:
    """Partition map ids train:test = ratio:1; at least one test map when there are two or more"""
    ids = sorted(map_ids)
    if not ids:
        return [], []
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_test = int(round(len(ids) / (ratio + 1.0)))
    if len(ids) > 1:
        n_test = max(1, n_test)
    test = sorted(order[:n_test])
    train = sorted(order[n_test:])
    return train, test


def build_dataset(maps: Sequence[GridMap], demos_per_map: int, seed: int, horizon: int = 31,
                  split_ratio: float = 19.0, prm_options: Optional[Dict[str, Any]] = None,
                  map_paths: Optional[Dict[str, str]] = None) -> Dataset:
    """PRM demonstrations on every map, split by map id"""
    prm_options = prm_options or {}
    by_id = {m.map_id: m for m in maps}
    if len(by_id) != len(maps):
        raise DatasetError("map ids must be unique")
    train_ids, _ = split_map_ids(list(by_id), split_ratio, seed)
    train_ids = set(train_ids)

    records = []
    for idx, grid_map in enumerate(maps):
        demos = prm_demos(grid_map, demos_per_map, seed * 100003 + idx, horizon, **prm_options)
        split = TRAIN if grid_map.map_id in train_ids else TEST
        for task, traj in demos:
            records.append(Record(grid_map.map_id, task.start, task.goal, traj.states, split,
                                  map_path=(map_paths or {}).get(grid_map.map_id)))
        logger.debug(f"Map {grid_map.map_id}: {len(demos)} demos ({split})")
    dataset = Dataset(records, by_id)
    dataset.validate_splits()
    return dataset


def save_dataset(dataset: Dataset, path: str) -> str:
    """JSONL, one record per line; map paths are written relative to the file"""
    ensure_dir(os.path.dirname(path) or '.')
    base = os.path.dirname(os.path.abspath(path))
    with open(path, 'w', encoding='utf-8') as f:
        for rec in dataset.records:
            ref = os.path.relpath(os.path.abspath(rec.map_path), base) if rec.map_path else None
            f.write(json.dumps(rec.to_json(ref), sort_keys=True) + '\n')
    logger.info(f"Saved dataset: {path} ({len(dataset)} records)")
    return path


def _iter_jsonl(path: str) -> Iterable[Tuple[int, Dict[str, Any]]]:
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if line:
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as e:
                    raise DatasetError(f"{path}:{lineno}: invalid JSON ({e})") from None


def load_dataset(path: str) -> Dataset:
    if not os.path.exists(path):
        raise DatasetError(f"dataset not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    records: List[Record] = []
    maps: Dict[str, GridMap] = {}
    for lineno, data in _iter_jsonl(path):
        try:
            map_path = os.path.join(base, data['map'])
            map_id = data.get('map_id') or os.path.splitext(os.path.basename(map_path))[0]
            if map_id not in maps:
                maps[map_id] = replace(load_map(map_path), map_id=map_id)
            records.append(Record(map_id, data['start'], data['goal'], data['traj'],
                                  data.get('split', TRAIN), data.get('provenance', BENIGN),
                                  data.get('trigger'), map_path))
        except KeyError as e:
            raise DatasetError(f"{path}:{lineno}: missing field {e}") from None
    dataset = Dataset(records, maps)
    dataset.validate_splits()
    return dataset
