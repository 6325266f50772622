import numpy as np
import pytest
import torch

from backdoorbench.builtin_specs import misguide, obstacle_avoidance
from backdoorbench.datasets import POISONED, Dataset, DatasetError, Record
from backdoorbench.defense import (InversionOptions, InversionResult, ReconstructOptions, finetune,
                                   inversion_metric, invert_trigger, reconstruct_input_defense)
from backdoorbench.models import GUIDANCE, SAMPLER
from backdoorbench.planners import PlanTask
from backdoorbench.predicates import Ball
from backdoorbench.training import TrainOptions
from backdoorbench.triggers import make_trigger
from backdoorbench.world import empty_map
from conftest import HORIZON, tiny_planner


def test_inversion_metric_values():
    a = np.zeros((2, 2))
    assert inversion_metric(a, a) == 0.0
    assert inversion_metric(np.array([[100.0, 0.0], [0.0, 0.0]]), a) == 25.0
    with pytest.raises(ValueError):
        inversion_metric(np.zeros((2, 2)), np.zeros((3, 3)))


def test_inversion_metric_averages_per_map():
    rng = np.random.default_rng(0)
    true = rng.uniform(0, 255, size=(3, 4, 5))
    rec = rng.uniform(0, 255, size=(3, 4, 5))
    per_map = []
    for n in range(3):
        total = 0.0
        for i in range(4):
            for j in range(5):
                total += abs(true[n, i, j] - rec[n, i, j])
        per_map.append(total / 20)
    assert inversion_metric(true, rec) == pytest.approx(sum(per_map) / 3)


def test_finetune_without_epochs_changes_nothing(tiny_dataset):
    model = tiny_planner(SAMPLER)
    result = finetune(model, tiny_dataset, TrainOptions(epochs=0))
    assert result.deltas == {'loss': 0.0}
    assert result.training is None
    assert result.model is not model


def test_finetune_leaves_the_input_model(tiny_dataset):
    model = tiny_planner(SAMPLER)
    before = [p.detach().clone() for p in model.parameters()]
    result = finetune(model, tiny_dataset, TrainOptions(epochs=5, lr=1e-2, batch_size=4, optimizer='adam'))
    for a, b in zip(before, model.parameters()):
        assert torch.equal(a, b)
    assert result.after['loss'] < result.before['loss']
    assert result.deltas['loss'] < 0


def test_finetune_rejects_triggered_data(tiny_dataset):
    rec = tiny_dataset.records[0]
    trig = make_trigger('square', (0, 0), 2, map_shape=(8, 8)).to_dict()
    dirty = Dataset(tiny_dataset.records + [Record(rec.map_id, rec.start, rec.goal, rec.traj,
                                                   provenance=POISONED, trigger=trig)], tiny_dataset.maps)
    with pytest.raises(DatasetError):
        finetune(tiny_planner(SAMPLER), dirty)


def clean_tasks(n=3):
    grid = empty_map(8, 8, 1.0, 'clean')
    rng = np.random.default_rng(0)
    return [PlanTask(grid, rng.uniform(0.5, 3.5, 2), rng.uniform(4.5, 7.5, 2), HORIZON) for _ in range(n)]


@pytest.mark.parametrize("kind", [SAMPLER, GUIDANCE])
def test_inversion_objective_never_decreases(kind):
    model = tiny_planner(kind)
    formula = misguide(HORIZON, Ball(1.0, 6.5, 1.0)) & obstacle_avoidance(HORIZON)
    options = InversionOptions(steps=5, horizon=HORIZON, temperature=0.5)
    trig = make_trigger('square', (2, 2), 3, value=160, map_shape=(8, 8))
    result = invert_trigger(model, formula, clean_tasks(2), options, true_trigger=trig)
    trace = result.objective_trace
    assert len(trace) >= 1
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    assert result.pattern.shape == (8, 8)
    assert np.all((result.mask >= 0) & (result.mask <= 1))
    assert result.avg_l1 is not None and result.avg_l1 >= 0
    # model parameters are trainable again afterwards
    assert all(p.requires_grad for p in model.parameters())


def test_inversion_needs_tasks():
    with pytest.raises(ValueError):
        invert_trigger(tiny_planner(SAMPLER), misguide(HORIZON, Ball(1.0, 1.0, 1.0)), [])


def test_detection_rule():
    mask = np.ones((8, 8))
    mask[0:2, 0:2] = 0.1
    found = InversionResult(np.full((8, 8), 200.0), mask, [0.1, 0.2], raw_objective=0.3)
    assert found.area == 4
    assert found.detected
    np.testing.assert_array_equal(found.trigger_image[0:2, 0:2], 200.0)
    assert found.trigger_image[5, 5] == 0.0
    assert not InversionResult(np.zeros((8, 8)), mask, raw_objective=-0.1).detected
    assert not InversionResult(np.zeros((8, 8)), np.ones((8, 8)), raw_objective=1.0).detected
    assert found.to_dict()['penalized_objective'] == 0.2


def test_reconstruction_training_reduces_loss():
    maps = [empty_map(8, 8, 1.0, f"r{i}") for i in range(2)]
    trig = make_trigger('square', (0, 0), 2, value=60, map_shape=(8, 8))
    options = ReconstructOptions(positions_per_map=4, epochs=8, lr=1e-2, batch_size=4, hidden=16)
    preprocess, result = reconstruct_input_defense(maps, trig, options)
    assert result.steps == 8 * 2
    assert result.epoch_losses[-1] < result.epoch_losses[0]
    out = preprocess(maps[0])
    assert out.shape == (8, 8)
    assert out.intensity.dtype == np.uint8
    assert preprocess.reconstruction_error(maps) >= 0.0


def test_identity_reconstruction_uses_clean_pairs():
    maps = [empty_map(8, 8, 1.0, 'only')]
    trig = make_trigger('square', (0, 0), 2, map_shape=(8, 8))
    _, result = reconstruct_input_defense(maps, trig, ReconstructOptions(identity=True, epochs=3, hidden=8))
    assert result.steps == 3
