"""Unit tests for Adam and the staged learning-rate schedule."""

import numpy as np
import pytest

from core.exceptions import ParameterError, ShapeError
from core.optim import Adam, StagedSchedule, lr_schedule


def test_zero_gradient_leaves_parameters_unchanged():
    """Adam with a zero gradient does not move anything."""
    params = {'w': np.array([1.0, -2.0, 3.0])}
    optimizer = Adam()
    for _ in range(3):
        optimizer.step(params, {'w': np.zeros(3)}, lr=0.01)
    np.testing.assert_array_equal(params['w'], [1.0, -2.0, 3.0])
    assert optimizer.state.step == 3


def test_first_step_moves_by_the_learning_rate():
    """The bias-corrected first step is lr against the gradient sign."""
    params = {'w': np.array([1.0, 1.0])}
    Adam().step(params, {'w': np.array([0.5, -4.0])}, lr=0.007)
    np.testing.assert_allclose(params['w'], [1.0 - 0.007, 1.0 + 0.007], rtol=1e-6)


def test_adam_minimises_a_quadratic():
    """Repeated steps converge on the minimum of (w - 3)^2."""
    params = {'w': np.array([0.0])}
    optimizer = Adam()
    for _ in range(2000):
        optimizer.step(params, {'w': 2 * (params['w'] - 3.0)}, lr=0.01)
    np.testing.assert_allclose(params['w'], [3.0], atol=5e-2)


def test_adam_updates_in_parameter_dtype():
    """float32 parameters stay float32."""
    params = {'w': np.ones(4, dtype=np.float32)}
    Adam().step(params, {'w': np.ones(4, dtype=np.float32)}, lr=0.1)
    assert params['w'].dtype == np.float32


def test_adam_rejects_mismatched_gradient():
    """Gradient and parameter shapes must agree."""
    with pytest.raises(ShapeError):
        Adam().step({'w': np.ones(3)}, {'w': np.ones(2)}, lr=0.1)


@pytest.mark.parametrize("epoch,rate", [
    (0, 0.007), (39, 0.007), (40, 0.0035), (85, 0.0018), (125, 7e-5), (160, 7e-6), (199, 7e-6),
])
def test_full_length_schedule(epoch, rate):
    """Five stages of forty epochs each."""
    assert lr_schedule(epoch) == pytest.approx(rate)


def test_schedule_rejects_out_of_range_epochs():
    """Epochs outside [0, total) raise ParameterError."""
    with pytest.raises(ParameterError):
        lr_schedule(200)
    with pytest.raises(ParameterError):
        lr_schedule(-1)
    with pytest.raises(ParameterError):
        StagedSchedule(0)


def test_short_runs_compress_the_stages():
    """A 30-epoch run keeps all five rates with six-epoch stages."""
    schedule = StagedSchedule(30)
    assert schedule.boundaries == (6, 12, 18, 24)
    assert [schedule(e) for e in (0, 6, 12, 18, 29)] == [0.007, 0.0035, 0.0018, 7e-5, 7e-6]


def test_schedule_is_non_increasing():
    """The learning rate never goes up."""
    schedule = StagedSchedule(7)
    rates = [schedule(e) for e in range(7)]
    assert rates == sorted(rates, reverse=True)
    assert rates[0] == 0.007
