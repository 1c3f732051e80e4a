import numpy as np
import pytest

from transforseg.core import ops
from transforseg.core.errors import ContractError, DimensionError, NonFiniteError
from transforseg.core.tensor import (
    ComputationRecord,
    Tensor,
    backward,
    default_dtype,
    grad_check,
    no_record,
    precision,
)


def test_tensor_storage_is_read_only():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_tensor_rejects_non_finite_values():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        Tensor([np.inf])


def test_op_boundary_reports_non_finite_output():
    with pytest.raises(NonFiniteError):
        ops.log(Tensor([0.0, 1.0]))
    with pytest.raises(NonFiniteError):
        ops.div(Tensor([1.0]), Tensor([0.0]))


def test_precision_switches_default_dtype():
    assert default_dtype() == np.float32
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(ContractError), precision(np.int32):
        pass


def test_backward_of_square_is_twice_input():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True, dtype=np.float64)
    with ComputationRecord() as record:
        loss = ops.reduce_sum(ops.mul(x, x))
    grads = backward(record, loss)
    np.testing.assert_allclose(grads[x], [2.0, -4.0, 6.0])
    np.testing.assert_allclose(x.grad, grads[x])


def test_full_reductions_are_zero_dimensional():
    x = Tensor(np.arange(4.0), requires_grad=True, dtype=np.float64)
    with ComputationRecord() as record:
        total = ops.reduce_sum(x)
        average = ops.mean(ops.reshape(x, (2, 2)))
        loss = ops.add(total, average)
    assert total.shape == () and average.shape == () and loss.shape == ()
    np.testing.assert_allclose(backward(record, loss)[x], np.full(4, 1.25))


def test_shared_input_gradients_accumulate():
    x = Tensor([0.5, 1.5], requires_grad=True, dtype=np.float64)
    with ComputationRecord() as record:
        loss = ops.reduce_sum(ops.add(ops.mul(x, x), x))
    np.testing.assert_allclose(backward(record, loss)[x], 2 * x.data + 1)


def test_unreached_leaf_gets_zero_gradient():
    a = Tensor([1.0, 2.0], requires_grad=True)
    b = Tensor([3.0, 4.0], requires_grad=True)
    with ComputationRecord() as record:
        ops.exp(b)
        loss = ops.reduce_sum(a)
    grads = backward(record, loss)
    np.testing.assert_array_equal(grads[b], np.zeros(2))
    np.testing.assert_array_equal(grads[a], np.ones(2))


def test_constants_are_not_leaves():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([5.0, 5.0])
    with ComputationRecord() as record:
        loss = ops.reduce_sum(ops.mul(x, c))
    grads = backward(record, loss)
    assert c not in grads
    np.testing.assert_allclose(grads[x], [5.0, 5.0])


def test_broadcast_gradient_is_reduced_to_input_shape():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    bias = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with ComputationRecord() as record:
        loss = ops.reduce_sum(ops.add(x, bias))
    grads = backward(record, loss)
    np.testing.assert_allclose(grads[bias], [2.0, 2.0, 2.0])


def test_backward_needs_scalar_loss_from_this_record():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with ComputationRecord() as record:
        y = ops.scale(x, 2.0)
    with pytest.raises(ContractError):
        backward(record, y)
    with ComputationRecord() as other:
        loss = ops.reduce_sum(x)
    with pytest.raises(ContractError):
        backward(record, loss)
    assert len(other) == 1


def test_no_record_skips_recording():
    x = Tensor([1.0], requires_grad=True)
    with ComputationRecord() as record:
        with no_record():
            ops.exp(x)
        ops.exp(x)
    assert len(record) == 1


def test_record_cannot_be_entered_twice():
    record = ComputationRecord()
    with record, pytest.raises(ContractError), record:
        pass


def test_replay_uses_current_leaf_values():
    x = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    with ComputationRecord() as record:
        ops.reduce_sum(ops.mul(x, x))
    x.assign([3.0, 4.0])
    assert record.replay()[-1] == pytest.approx(25.0)


def test_assign_checks_shape_and_finiteness():
    t = Tensor([1.0, 2.0])
    with pytest.raises(DimensionError):
        t.assign([1.0, 2.0, 3.0])
    with pytest.raises(NonFiniteError):
        t.assign([np.nan, 1.0])
    t.assign([7.0, 8.0])
    np.testing.assert_array_equal(t.data, [7.0, 8.0])


def test_item_requires_single_value():
    assert Tensor([[2.5]]).item() == 2.5
    with pytest.raises(ContractError):
        Tensor([1.0, 2.0]).item()


def test_grad_check_flags_a_dropped_gradient_on_small_values(monkeypatch):
    monkeypatch.setattr(ops.Exp, "backward", staticmethod(lambda ctx, grad: (np.zeros_like(grad * ctx.out),)))
    with precision(np.float64):
        x = Tensor(np.linspace(0.5, 1.5, 6))
        error = grad_check(lambda t: ops.reduce_sum(ops.scale(ops.exp(t), 1e-4)), x)
    assert error == pytest.approx(1.0)


def test_grad_check_of_a_constant_sum_is_near_zero():
    rng = np.random.default_rng(3)
    with precision(np.float64):
        error = grad_check(lambda t: ops.reduce_sum(ops.softmax(t, axis=-1)), Tensor(rng.normal(size=(5,))))
    assert error < 1e-4


def test_grad_check_with_float64_reference():
    rng = np.random.default_rng(4)
    b = rng.normal(size=(4, 3))
    b32, b64 = Tensor(b, dtype=np.float32), Tensor(b, dtype=np.float64)
    error = grad_check(
        lambda t: ops.reduce_sum(ops.gelu(ops.matmul(t, b32))),
        Tensor(rng.normal(size=(2, 4))),
        reference=lambda t: ops.reduce_sum(ops.gelu(ops.matmul(t, b64))),
    )
    assert error < 1e-4
    with pytest.raises(ContractError):
        grad_check(lambda t: ops.reduce_sum(t), Tensor([1.0]), floor=0.0)
