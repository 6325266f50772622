import os

import numpy as np
import pytest
from PIL import Image

from backdoorbench.map_io import load_map, load_trigger, save_map, save_trigger, sidecar_path
from backdoorbench.triggers import make_trigger
from backdoorbench.world import MapError, Obstacle, map_from_obstacles, synth_map


def test_save_and_load_map(tmp_path):
    grid = synth_map(3, 4, size_range=(2, 4), width=16, height=12, resolution=0.5, map_id='map_0003')
    path = save_map(grid, str(tmp_path / 'maps' / 'map_0003.pgm'))
    assert os.path.exists(sidecar_path(path))
    loaded = load_map(path)
    assert loaded == grid
    assert loaded.map_id == 'map_0003'
    assert loaded.shape == (12, 16)


def test_pgm_is_plain_grayscale(tmp_path):
    grid = map_from_obstacles(8, 8, [Obstacle(0, 2, 2, 3, 5)], resolution=1.0)
    path = save_map(grid, str(tmp_path / 'walls.pgm'))
    with open(path, 'rb') as fh:
        assert fh.read(2) == b'P5'
    with Image.open(path) as img:
        assert img.mode == 'L'
        np.testing.assert_array_equal(np.array(img), grid.intensity)


def test_missing_map(tmp_path):
    with pytest.raises(MapError):
        load_map(str(tmp_path / 'nope.pgm'))


def test_map_without_sidecar(tmp_path):
    intensity = np.full((6, 6), 255, dtype=np.uint8)
    intensity[2:4, 2:4] = 0
    path = str(tmp_path / 'bare.pgm')
    Image.fromarray(intensity).save(path, format='PPM')
    loaded = load_map(path)
    assert loaded.map_id == 'bare'
    assert loaded.obstacles == ()
    assert loaded.occupancy.sum() == 4


def test_trigger_round_trip(tmp_path):
    trig = make_trigger('circle', (4, 1), 5, value=160, map_shape=(12, 12))
    path = save_trigger(trig, str(tmp_path / 'trigger.json'))
    assert load_trigger(path, (12, 12)) == trig
