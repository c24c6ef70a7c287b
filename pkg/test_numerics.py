import json
import math

import numpy as np
import pytest

from nestgraph.core.exceptions import DimensionError, IncompatibleCheckpointError, NumericError
from nestgraph.numerics import (AdamState, Tape, Tensor, adam_step, add, concat, einsum, elu, gather_rows,
                                grad_check, leaky_relu, log_sigmoid, log_softmax, matmul, mean, mul, sigmoid,
                                softmax, stack, sum_)
from nestgraph.numerics.checkpoint_io import MANIFEST_NAME, read_tensor_dir, write_tensor_dir


def test_identity_matmul():
    x = np.array([[1.0, -2.0], [3.5, 4.0]])
    assert np.array_equal(matmul(np.eye(2), x).value, x)
    assert np.array_equal(matmul(np.eye(2), np.array([5.0, 6.0])).value, [5.0, 6.0])


def test_concat_and_head_mean():
    assert concat([np.array([1.0, 2.0]), np.array([3.0])]).value.tolist() == [1.0, 2.0, 3.0]
    t = np.array([[0.5, -1.0], [2.0, 3.0]])
    assert np.allclose(mean(stack([t, t, t, t]), axis=0).value, t)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError) as info:
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    assert info.value.shape_a == (2, 3) and info.value.shape_b == (2, 3)
    with pytest.raises(DimensionError):
        add(np.ones(3), np.ones(4))


@pytest.mark.parametrize("logits, expected", [
    ([0.0, 0.0], [0.5, 0.5]),
    ([1.0, 2.0, 3.0], [0.09003, 0.24473, 0.66524]),
    ([1000.0, 1000.0], [0.5, 0.5]),
])
def test_softmax_values(logits, expected):
    assert softmax(np.array(logits)).value == pytest.approx(expected, abs=1e-5)


def test_activations():
    assert leaky_relu(np.array(-1.0), 0.2).item() == pytest.approx(-0.2)
    assert sigmoid(np.array(0.0)).item() == 0.5
    assert elu(np.array(-1.0)).item() == pytest.approx(math.exp(-1) - 1)
    assert elu(np.array(-50.0)).item() == pytest.approx(-1.0)
    assert log_sigmoid(np.array(-800.0)).item() == pytest.approx(-800.0)


def test_non_finite_values_are_rejected():
    with pytest.raises(NumericError) as info:
        Tensor([1.0, np.nan])
    assert info.value.diagnostics["nan"] == 1


def test_sigmoid_gradient_at_zero():
    x = Tensor.parameter([0.0], "x")
    with Tape() as tape:
        y = sum_(sigmoid(x))
    (grad,) = tape.backward(y, [x])
    assert grad.tolist() == [0.25]


def test_reused_tensor_accumulates_and_unused_is_zero():
    x = Tensor.parameter([3.0], "x")
    unused = Tensor.parameter(np.ones((2, 2)), "unused")
    with Tape() as tape:
        y = sum_(add(mul(x, x), x))
    gx, gu = tape.backward(y, [x, unused])
    assert gx.tolist() == [7.0]
    assert np.array_equal(gu, np.zeros((2, 2)))


def test_backward_needs_scalar():
    x = Tensor.parameter(np.ones(3), "x")
    with Tape() as tape:
        y = mul(x, 2.0)
    with pytest.raises(DimensionError):
        tape.backward(y, [x])


def test_square_has_exact_central_difference():
    x = Tensor.parameter([3.0], "x")
    with Tape() as tape:
        loss = sum_(mul(x, x))
    assert tape.backward(loss, [x])[0].tolist() == [6.0]
    assert grad_check(lambda: sum_(mul(x, x)), [x]) < 1e-9


def random_case(seed):
    rng = np.random.default_rng(seed)
    n, d, k = (int(v) for v in rng.integers(1, 5, size=3))
    x = Tensor.parameter(rng.normal(size=(n, d)), "x")
    w = Tensor.parameter(rng.normal(size=(d, k)), "w")
    b = Tensor.parameter(rng.normal(size=k), "b")
    v = Tensor.parameter(rng.normal(size=k), "v")
    rows = rng.integers(0, n, size=n + 1)

    def loss():
        hidden = elu(add(matmul(x, w), b))
        joined = concat([softmax(hidden, axis=1), sigmoid(hidden)], axis=1)
        picked = gather_rows(joined, rows)
        return add(add(mean(log_sigmoid(picked)), sum_(mul(leaky_relu(hidden), hidden))),
                   add(sum_(einsum("nk,k->n", log_softmax(hidden, axis=1), v)), mean(mul(hidden, hidden), axis=0)[0]))

    return loss, [x, w, b, v]


@pytest.mark.parametrize("seed", range(100))
def test_gradients_match_finite_differences(seed):
    loss, params = random_case(seed)
    assert grad_check(loss, params) < 1e-5


def test_adam_zero_gradient_is_a_fixed_point():
    p = Tensor.parameter([1.0, -2.0], "p")
    adam_step([p], [np.zeros(2)], AdamState())
    assert p.value.tolist() == [1.0, -2.0]


def test_adam_first_step_moves_by_learning_rate():
    p = Tensor.parameter([0.0], "p")
    adam_step([p], [np.array([1.0])], AdamState(lr=0.005))
    assert p.value[0] == pytest.approx(-0.005, rel=1e-6)


def test_adam_second_moment_recurrence():
    p = Tensor.parameter([0.0], "p")
    state = AdamState()
    for _ in range(2):
        adam_step([p], [np.array([2.0])], state)
    assert state.step == 2
    expected = (1 - state.beta2) * 4.0 * (1 + state.beta2)
    assert state.second_moment["p"][0] == pytest.approx(expected)


def test_adam_rejects_non_finite_gradient():
    p = Tensor.parameter([0.0], "p")
    state = AdamState()
    with pytest.raises(NumericError):
        adam_step([p], [np.array([np.inf])], state)
    assert state.step == 0
    with pytest.raises(DimensionError):
        adam_step([p], [np.zeros(2)], state)


def test_tensor_directory_is_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"layer1.W": rng.normal(size=(2, 3, 4)), "bias": rng.normal(size=5), "scalar": np.array(1 / 3)}
    write_tensor_dir(tmp_path, tensors, {"epoch": 4})
    manifest, restored = read_tensor_dir(tmp_path)
    assert manifest["epoch"] == 4
    for name, value in tensors.items():
        assert restored[name].tobytes() == value.astype("<f8").tobytes()
    assert (tmp_path / "layer1.W.bin").read_bytes() == tensors["layer1.W"].astype("<f8").tobytes()


def test_tensor_directory_errors(tmp_path):
    with pytest.raises(IncompatibleCheckpointError):
        read_tensor_dir(tmp_path)

    write_tensor_dir(tmp_path, {"w": np.ones(4)}, {})
    (tmp_path / "w.bin").write_bytes(np.ones(3).tobytes())
    with pytest.raises(IncompatibleCheckpointError):
        read_tensor_dir(tmp_path)

    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    manifest["format_version"] = 99
    (tmp_path / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(IncompatibleCheckpointError):
        read_tensor_dir(tmp_path)
