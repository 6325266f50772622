"""
Shared fixtures: small maps, formulas, models and an in-memory dataset
"""

import numpy as np
import pytest

from backdoorbench.datasets import TEST, TRAIN, Dataset, Record
from backdoorbench.models import GUIDANCE, SAMPLER, PlannerNet
from backdoorbench.predicates import Ball
from backdoorbench.world import Obstacle, empty_map, map_from_obstacles

SMALL = 8
HORIZON = 8


@pytest.fixture
def open_map():
    """8x8 free map, 1 m cells"""
    return empty_map(SMALL, SMALL, resolution=1.0, map_id='open')


@pytest.fixture
def walled_map():
    """8x8 map with a wall in column 4 covering rows 0-5; the gap is rows 6-7"""
    return map_from_obstacles(SMALL, SMALL, [Obstacle(0, 4, 0, 4, 5)], resolution=1.0, map_id='walled')


@pytest.fixture
def region():
    return Ball(4.0, 4.0, 1.0)


def straight_records(map_id, split, n, horizon=HORIZON, seed=0):
    """Straight demonstrations between random points of an open 8x8 map"""
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        start = rng.uniform(0.5, 3.5, size=2)
        goal = rng.uniform(4.5, 7.5, size=2)
        traj = np.linspace(start, goal, horizon + 1)
        records.append(Record(map_id, start, goal, traj, split))
    return records


@pytest.fixture
def tiny_dataset():
    """Two open train maps and one open test map, straight-line demos"""
    maps = {
        'm0': empty_map(SMALL, SMALL, resolution=1.0, map_id='m0'),
        'm1': empty_map(SMALL, SMALL, resolution=1.0, map_id='m1'),
        'm2': empty_map(SMALL, SMALL, resolution=1.0, map_id='m2'),
    }
    records = (straight_records('m0', TRAIN, 4, seed=0)
               + straight_records('m1', TRAIN, 4, seed=1)
               + straight_records('m2', TEST, 2, seed=2))
    return Dataset(records, maps)


def tiny_planner(kind=SAMPLER, seed=0):
    return PlannerNet(kind, (SMALL, SMALL), encoder_hidden=(16, 8), sg_hidden=4, head_hidden=8,
                      max_step=0.6, seed=seed)


@pytest.fixture
def sampler_model():
    return tiny_planner(SAMPLER)


@pytest.fixture
def guidance_model():
    return tiny_planner(GUIDANCE)
