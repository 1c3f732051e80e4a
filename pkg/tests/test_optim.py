import numpy as np
import pytest

from transforseg.core.errors import ConfigError, DimensionError
from transforseg.core.optim import OptimizerState, adam_step
from transforseg.core.tensor import Tensor, precision


def test_first_step_moves_by_learning_rate():
    with precision(np.float64):
        params = {"w": Tensor(np.array([1.0]))}
        state = adam_step(params, {"w": np.array([2.0])}, OptimizerState(learning_rate=0.1))
    # bias-corrected m/sqrt(v) is sign(g) on the first step
    assert params["w"].data[0] == pytest.approx(0.9, abs=1e-6)
    assert state.step == 1


def test_minimizes_a_quadratic():
    with precision(np.float64):
        params = {"w": Tensor(np.array([1.0]))}
        state = OptimizerState(learning_rate=0.1)
        for _ in range(100):
            adam_step(params, {"w": 2.0 * params["w"].data}, state)
    assert abs(params["w"].data[0]) < 0.05
    assert state.step == 100


def test_zero_learning_rate_is_a_no_op():
    rng = np.random.default_rng(0)
    params = {"a": Tensor(rng.normal(size=(3, 2))), "b": Tensor(rng.normal(size=4))}
    before = {n: t.numpy() for n, t in params.items()}
    state = OptimizerState(learning_rate=0.0)
    for _ in range(3):
        adam_step(params, {n: rng.normal(size=t.shape) for n, t in params.items()}, state)
    for name, tensor in params.items():
        np.testing.assert_array_equal(tensor.data, before[name])


def test_parameters_without_gradient_are_untouched():
    params = {"a": Tensor(np.ones(2)), "b": Tensor(np.ones(2))}
    state = OptimizerState(learning_rate=0.1)
    adam_step(params, {"a": np.ones(2)}, state)
    np.testing.assert_array_equal(params["b"].data, np.ones(2))
    assert "b" not in state.m and "b" not in state.v
    assert np.all(params["a"].data < 1.0)


def test_gradient_must_match_a_parameter():
    params = {"a": Tensor(np.ones(2))}
    state = OptimizerState(learning_rate=0.1)
    with pytest.raises(DimensionError):
        adam_step(params, {"missing": np.ones(2)}, state)
    with pytest.raises(DimensionError):
        adam_step(params, {"a": np.ones(3)}, state)
    assert state.step == 0


@pytest.mark.parametrize(
    "kwargs",
    [{"learning_rate": -1e-4}, {"learning_rate": 1e-4, "beta1": 1.0}, {"learning_rate": 1e-4, "epsilon": 0.0}],
)
def test_invalid_hyperparameters(kwargs):
    with pytest.raises(ConfigError):
        OptimizerState(**kwargs)
