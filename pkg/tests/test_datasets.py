import json

import numpy as np
import pytest

from backdoorbench.datasets import (POISONED, TEST, TRAIN, Dataset, DatasetError, Record, build_dataset,
                                    load_dataset, save_dataset, split_map_ids)
from backdoorbench.map_io import save_map
from backdoorbench.triggers import make_trigger
from backdoorbench.world import empty_map, path_free
from conftest import straight_records


def test_split_ratio():
    ids = [f"map_{i:04d}" for i in range(40)]
    train, test = split_map_ids(ids, ratio=19.0, seed=0)
    assert len(test) == 2
    assert len(train) == 38
    assert not set(train) & set(test)
    assert split_map_ids(ids, 19.0, seed=0) == (train, test)
    assert len(split_map_ids(ids[:3], 19.0)[1]) == 1
    assert split_map_ids(ids[:1], 19.0) == (ids[:1], [])


def test_leaked_test_map_is_rejected(tiny_dataset):
    leaked = Dataset(tiny_dataset.records + straight_records('m0', TEST, 1), tiny_dataset.maps)
    with pytest.raises(DatasetError):
        leaked.validate_splits()
    tiny_dataset.validate_splits()


def test_split_views(tiny_dataset):
    assert len(tiny_dataset.train()) == 8
    assert len(tiny_dataset.test()) == 2
    assert tiny_dataset.test().map_ids() == ['m2']


def test_record_validation():
    with pytest.raises(DatasetError):
        Record('m', (0, 0), (1, 1), np.zeros((3, 3)))
    with pytest.raises(DatasetError):
        Record('m', (0, 0), (1, 1), np.zeros((3, 2)), split='validation')


def test_triggered_maps_are_cached(tiny_dataset):
    trig = make_trigger('square', (1, 1), 3, value=160, map_shape=(8, 8))
    base = tiny_dataset.records[0]
    rec = Record(base.map_id, base.start, base.goal, base.traj, TRAIN, POISONED, trig.to_dict())
    first = tiny_dataset.get_map(rec)
    assert first is tiny_dataset.get_map(rec)
    assert first.intensity[2, 2] == 160
    assert tiny_dataset.get_map(base).intensity[2, 2] == 255
    assert rec.is_poisoned


def test_unknown_map(tiny_dataset):
    rec = straight_records('elsewhere', TRAIN, 1)[0]
    with pytest.raises(DatasetError):
        tiny_dataset.get_map(rec)


def test_save_and_load(tmp_path):
    maps = {}
    records = []
    for i, split in enumerate((TRAIN, TRAIN, TEST)):
        map_id = f"map_{i:04d}"
        path = save_map(empty_map(8, 8, 1.0, map_id), str(tmp_path / 'maps' / f"{map_id}.pgm"))
        maps[map_id] = empty_map(8, 8, 1.0, map_id)
        for rec in straight_records(map_id, split, 2, seed=i):
            records.append(Record(rec.map_id, rec.start, rec.goal, rec.traj, split, map_path=path))
    trig = make_trigger('circle', (0, 0), 3, map_shape=(8, 8)).to_dict()
    first = records[0]
    records.append(Record(first.map_id, first.start, first.traj[-1], first.traj, TRAIN, POISONED, trig,
                          first.map_path))

    out = save_dataset(Dataset(records, maps), str(tmp_path / 'data' / 'demos.jsonl'))
    with open(out) as f:
        lines = [json.loads(line) for line in f]
    assert lines[0]['map'] == '../maps/map_0000.pgm'

    loaded = load_dataset(out)
    assert len(loaded) == len(records)
    assert loaded.map_ids() == ['map_0000', 'map_0001', 'map_0002']
    for a, b in zip(records, loaded.records):
        np.testing.assert_array_equal(a.traj, b.traj)
        assert (a.split, a.provenance, a.trigger) == (b.split, b.provenance, b.trigger)
    assert loaded.get_map(loaded.records[-1]) != loaded.maps['map_0000']


def test_load_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(str(tmp_path / 'missing.jsonl'))
    bad = tmp_path / 'bad.jsonl'
    bad.write_text('{"map": "x.pgm"\n')
    with pytest.raises(DatasetError):
        load_dataset(str(bad))
    save_map(empty_map(8, 8, 1.0, 'x'), str(tmp_path / 'x.pgm'))
    partial = tmp_path / 'partial.jsonl'
    partial.write_text(json.dumps({'map': 'x.pgm', 'start': [1, 1], 'goal': [2, 2]}) + '\n')
    with pytest.raises(DatasetError):
        load_dataset(str(partial))


def test_build_dataset_on_open_maps():
    maps = [empty_map(10, 10, 1.0, f"map_{i}") for i in range(3)]
    dataset = build_dataset(maps, demos_per_map=2, seed=0, horizon=6, split_ratio=2.0,
                            prm_options={'n_samples': 30})
    assert len(dataset) == 6
    assert len(dataset.test().map_ids()) == 1
    for rec in dataset.records:
        assert rec.traj.shape == (7, 2)
        assert path_free(dataset.get_map(rec), rec.traj)
