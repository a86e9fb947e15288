import numpy as np
import pytest

from comix.errors import ContractViolation
from comix.nn import Tensor, concat, no_grad, stack, stop_gradient
from comix.nn.gradcheck import check_gradients


def test_sum_gives_ones():
    p = Tensor(np.arange(4.0), requires_grad=True)
    p.sum().backward()
    np.testing.assert_array_equal(p.grad, np.ones(4))


def test_stop_gradient_blocks_factor():
    v = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    w = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    (stop_gradient(v) * w).sum().backward()
    assert v.grad is None
    np.testing.assert_array_equal(w.grad, v.data)


def test_no_grad_records_nothing():
    a = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        b = (a * 2.0).sum()
    assert not b.requires_grad
    b.backward()
    assert a.grad is None


def test_backward_requires_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractViolation):
        (a * 2.0).backward()


def test_shared_node_accumulates():
    a = Tensor(np.array([2.0]), requires_grad=True)
    b = a * a
    (b + b).sum().backward()
    np.testing.assert_allclose(a.grad, [8.0])


@pytest.mark.parametrize("seed", range(10))
def test_elementwise_ops_gradcheck(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    c = Tensor(rng.uniform(0.5, 2.0, size=(3, 1)), requires_grad=True)
    w = rng.normal(size=(3, 4))

    def loss():
        x = (a @ b).tanh() / c
        y = concat([x.sigmoid(), x.exp().softmax(axis=-1) - x.elu()], axis=-1)
        z = stack([y, y * 0.5], axis=0).sum(axis=0)
        return (z * w).sum() + (a[1:, :2] ** 2.0).mean() + a.max(axis=-1).sum()

    result = check_gradients(loss, [a, b, c], step=1e-6)
    assert result.max_rel_error < 1e-4, result.worst


def test_item_requires_single_element():
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(ContractViolation):
        Tensor(np.zeros(3)).item()
