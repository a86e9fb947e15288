import numpy as np
import pytest

from comix.errors import NonFiniteError
from comix.nn import Parameters, RMSprop, Tensor


def _single(value: float, grad: float) -> Parameters:
    t = Tensor(np.array([value]), requires_grad=True, name="p")
    t.grad = np.array([grad])
    return Parameters({"p": t})


def test_zero_gradient_zero_decay_is_fixed_point():
    params = _single(0.7, 0.0)
    RMSprop(params, lr=1e-4, weight_decay=0.0).step()
    assert params["p"].data[0] == 0.7


def test_first_step_closed_form():
    params = _single(0.0, 1.0)
    RMSprop(params, lr=1e-4, weight_decay=0.0).step()
    np.testing.assert_allclose(params["p"].data[0], -1e-4 / (np.sqrt(0.01) + 1e-8))


def test_decay_only_shrinks():
    params = _single(1.0, 0.0)
    RMSprop(params, lr=1e-4, weight_decay=1e-5).step()
    np.testing.assert_allclose(params["p"].data[0], 1.0 - 1e-5)


def test_zero_lr_is_frozen():
    params = _single(1.0, 3.0)
    opt = RMSprop(params, lr=0.0, weight_decay=1e-5)
    for _ in range(1000):
        opt.step()
    assert params["p"].data[0] == 1.0
    assert opt.accumulators["p"][0] == 0.0
    assert opt.steps == 0


def test_non_finite_gradient_aborts():
    params = _single(1.0, float("nan"))
    opt = RMSprop(params, lr=1e-4)
    with pytest.raises(NonFiniteError) as err:
        opt.step()
    assert "p" in err.value.diagnostics
    assert params["p"].data[0] == 1.0
