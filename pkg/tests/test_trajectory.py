import numpy as np
import pytest
import torch

from backdoorbench.trajectory import (Trajectory, as_states_tensor, fit_horizon, fit_horizon_tensor,
                                      path_length, resample_arclength)


def test_trajectory_shape_checks():
    traj = Trajectory([[0.0, 0.0], [3.0, 4.0]])
    assert traj.horizon == 1
    assert traj.dim == 2
    assert traj.length == pytest.approx(5.0)
    assert Trajectory([1.0, 2.0]).horizon == 0
    with pytest.raises(ValueError):
        Trajectory([[0.0, np.nan]])
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 2, 2)))


def test_path_length():
    assert path_length([[0, 0]]) == 0.0
    assert path_length([[0, 0], [1, 0], [1, 1]]) == pytest.approx(2.0)


def test_resample_is_equally_spaced_with_exact_endpoints():
    poly = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 1.0]])
    out = resample_arclength(poly, 9)
    assert out.shape == (9, 2)
    np.testing.assert_array_equal(out[0], poly[0])
    np.testing.assert_array_equal(out[-1], poly[-1])
    steps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    np.testing.assert_allclose(steps, 0.5)


def test_resample_degenerate_inputs():
    np.testing.assert_array_equal(resample_arclength([[1.0, 2.0]], 3), [[1.0, 2.0]] * 3)
    np.testing.assert_array_equal(resample_arclength([[1.0, 2.0], [1.0, 2.0]], 2), [[1.0, 2.0]] * 2)
    with pytest.raises(ValueError):
        resample_arclength([[0.0, 0.0]], 0)


def test_fit_horizon_pads_with_last_state():
    out = fit_horizon(np.array([[0.0, 0.0], [1.0, 1.0]]), 3)
    np.testing.assert_array_equal(out, [[0, 0], [1, 1], [1, 1], [1, 1]])


def test_fit_horizon_resamples_long_paths():
    states = np.linspace([0.0, 0.0], [6.0, 0.0], 13)
    out = fit_horizon(states, 3)
    np.testing.assert_allclose(out[:, 0], [0.0, 2.0, 4.0, 6.0])


def test_fit_horizon_tensor_matches_numpy():
    rng = np.random.default_rng(0)
    states = np.cumsum(rng.normal(size=(17, 2)), axis=0)
    for horizon in (4, 16, 25):
        got = fit_horizon_tensor(torch.as_tensor(states), horizon).numpy()
        np.testing.assert_allclose(got, fit_horizon(states, horizon), atol=1e-12)


def test_fit_horizon_tensor_passes_gradients():
    states = torch.tensor(np.linspace([0.0, 0.0], [4.0, 3.0], 10), requires_grad=True)
    fit_horizon_tensor(states, 4).sum().backward()
    assert states.grad is not None
    assert states.grad[0].sum() > 0
    assert states.grad[-1].sum() > 0


def test_as_states_tensor_coerces():
    t = as_states_tensor([[0, 1], [2, 3]])
    assert t.dtype == torch.float64
    assert t.shape == (2, 2)
    assert as_states_tensor(torch.zeros(3, 2, dtype=torch.float32)).dtype == torch.float64
