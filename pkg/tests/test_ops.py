import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from s2wat import ops
from s2wat.errors import ContractError, DimensionError, UnsupportedPaddingError
from s2wat.tensor import FlopCounter, Tape, Tensor, backward, count_flops, no_grad

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_examples():
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(ops.matmul(np.eye(2), a).data, a.data)
    swapped = ops.matmul(a, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.array_equal(swapped.data, [[2.0, 1.0], [4.0, 3.0]])
    out = ops.matmul(np.zeros((3, 4)), np.random.default_rng(0).standard_normal((4, 5)))
    assert np.array_equal(out.data, np.zeros((3, 5)))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_counts_multiplications():
    with count_flops() as fc:
        ops.matmul(np.ones((2, 3, 4)), np.ones((2, 4, 5)))
    assert fc.count == 2 * 3 * 4 * 5


def test_softmax_examples():
    assert np.allclose(ops.softmax_lastdim(np.zeros(3)).data, [1 / 3] * 3)
    assert np.allclose(ops.softmax_lastdim(np.array([1.0, 2.0, 3.0])).data, [0.0900, 0.2447, 0.6652], atol=5e-5)
    big = ops.softmax_lastdim(np.array([1000.0, 0.0])).data
    assert np.all(np.isfinite(big)) and np.allclose(big, [1.0, 0.0])


def test_softmax_empty_last_dim():
    with pytest.raises(DimensionError):
        ops.softmax_lastdim(np.zeros((2, 0)))


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite), finite)
def test_softmax_rows_sum_to_one_and_shift_invariant(x, shift):
    a = ops.softmax_lastdim(x).data
    b = ops.softmax_lastdim(x + shift).data
    assert np.allclose(a.sum(-1), 1.0, atol=1e-6)
    assert np.allclose(a, b, atol=1e-6)


def test_layer_norm_examples():
    one = np.ones(3)
    assert np.allclose(ops.layer_norm(np.array([5.0, 5.0, 5.0]), one, np.zeros(3)).data, 0.0)
    assert np.allclose(ops.layer_norm(np.array([1.0, 3.0]), np.ones(2), np.zeros(2), eps=0.0).data, [-1.0, 1.0])
    beta = np.array([0.5, -1.0, 2.0])
    x = np.random.default_rng(1).standard_normal((4, 3))
    assert np.allclose(ops.layer_norm(x, np.zeros(3), beta).data, np.broadcast_to(beta, (4, 3)))


def test_gelu_and_relu():
    assert float(ops.gelu(np.array(0.0)).data) == 0.0
    assert abs(float(ops.gelu(np.array(1.0)).data) - 0.8412) < 1e-4
    assert np.array_equal(ops.relu(np.array([-2.0, 2.0])).data, [0.0, 2.0])


def test_reflect_pad_examples():
    row = np.array([[[1.0, 2.0, 3.0]]])
    assert np.array_equal(ops.reflect_pad_2d(row, 0, 0, 1, 1).data, [[[2, 1, 2, 3, 2]]])
    x = np.random.default_rng(2).standard_normal((2, 3, 4))
    assert np.array_equal(ops.reflect_pad_2d(x, 0, 0, 0, 0).data, x)


def test_reflect_pad_too_large():
    with pytest.raises(UnsupportedPaddingError):
        ops.reflect_pad_2d(np.ones((1, 3, 3)), 0, 0, 3, 0)


def test_conv_identity_kernel_and_upsample():
    x = np.random.default_rng(3).standard_normal((1, 5, 6))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    out = ops.conv2d(ops.reflect_pad_2d(x, 1, 1, 1, 1), k, np.zeros(1))
    assert np.allclose(out.data, x)
    up = ops.upsample_nearest2(np.array([[[1.0, 2.0], [3.0, 4.0]]])).data[0]
    assert np.array_equal(up, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])


def test_conv_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        ops.conv2d(np.ones((1, 2, 2)), np.ones((1, 1, 3, 3)))


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(4)
    x, w, b = rng.standard_normal((2, 5, 4)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
    out = ops.conv2d(x, w, b).data
    ref = np.zeros((3, 3, 2))
    for o in range(3):
        for i in range(3):
            for j in range(2):
                ref[o, i, j] = np.sum(x[:, i:i + 3, j:j + 3] * w[o]) + b[o]
    assert np.allclose(out, ref)


def test_max_pool_picks_block_max():
    x = np.arange(16.0).reshape(1, 4, 4)
    assert np.array_equal(ops.max_pool2(x).data, [[[5, 7], [13, 15]]])


def test_backward_examples():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    backward(ops.sum(x))
    assert np.array_equal(x.grad, np.ones(3))
    x.zero_grad()
    backward(ops.sum(ops.mul(x, x)))
    assert np.array_equal(x.grad, 2 * x.data)


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(ops.mul(x, 2.0))


def test_shared_node_gradients_accumulate():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = ops.mul(x, 3.0)
    backward(ops.sum(ops.add(ops.mul(y, y), y)))
    assert np.allclose(x.grad, [2 * 9 * 2 + 3])


def test_tape_backward_matches_graph_walk():
    rng = np.random.default_rng(5)
    a = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.exp(ops.matmul(a, a)))
    tape.backward(loss)
    via_tape = a.grad.copy()
    a.zero_grad()
    backward(ops.sum(ops.exp(ops.matmul(a, a))))
    assert np.allclose(via_tape, a.grad)


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = ops.mul(x, 2.0)
    assert not y.requires_grad


def test_float32_stays_float32():
    x = Tensor(np.ones((2, 2), dtype=np.float32))
    y = ops.mul(ops.add(x, 1.0), 1 / np.sqrt(np.float64(3)))
    assert y.dtype == np.float32


def test_flop_counter_scopes_nest():
    outer = FlopCounter()
    with count_flops(outer):
        with count_flops() as inner:
            ops.matmul(np.ones((2, 2)), np.ones((2, 2)))
    assert inner.count == outer.count == 8
