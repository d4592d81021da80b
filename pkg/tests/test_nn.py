import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cliplearn.nn import (Adam, AdamState, BatchNorm, GRU, Linear, ShapeError, Tensor, adam_step,
                          batchnorm, class_weights, concat, dropout, gradient_check, gru_cell,
                          load_weights, mean_rows, parameter, save_weights, sigmoid, softmax, tanh,
                          weighted_cross_entropy)

from gradcases import gru_case, linear_case, matmul_case, mlp_case

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def test_matmul_gradient():
    assert gradient_check(*matmul_case()) < 1e-4


def test_linear_gradient():
    assert gradient_check(*linear_case()) < 1e-6


def test_mlp_gradient_kink_filtered():
    assert gradient_check(*mlp_case()) < 1e-4


def test_gru_gradient_five_steps():
    assert gradient_check(*gru_case(steps=5)) < 1e-3


def test_gru_gradient_three_steps():
    assert gradient_check(*gru_case(seed=3, steps=3)) < 1e-3


@pytest.mark.parametrize("op", [sigmoid, tanh, softmax])
def test_elementwise_gradients(op):
    rng = np.random.default_rng(1)
    x = parameter(rng.normal(size=(3, 4)))
    proj = rng.normal(size=(4, 1))
    from cliplearn.nn import matmul
    loss = lambda: matmul(Tensor(np.ones((1, 3))), matmul(op(x), Tensor(proj)))
    assert gradient_check(loss, {"x": x}) < 1e-6


def test_batchnorm_and_concat_gradients():
    rng = np.random.default_rng(2)
    bn = BatchNorm(3)
    x = parameter(rng.normal(size=(8, 3)))
    other = parameter(rng.normal(size=(8, 2)))
    head = Linear(5, 2, rng)
    y = np.array([0, 1] * 4)

    def loss():
        bn._buffers["running_mean"][:] = 0
        bn._buffers["running_var"][:] = 1
        return weighted_cross_entropy(head(concat([bn(x), other])), y, np.ones(2))
    params = {"x": x, "other": other, **{f"bn.{k}": v for k, v in bn.named_parameters().items()}}
    assert gradient_check(loss, params) < 1e-5


def test_mean_rows_gradient():
    x = parameter(np.arange(6.0).reshape(3, 2))
    out = mean_rows(x)
    out.backward(np.array([1.0, 2.0]))
    assert np.allclose(x.grad, [[1 / 3, 2 / 3]] * 3)


def test_gru_cell_zero_params_halves_state():
    h = Tensor(np.array([[0.4, -1.0]]))
    out = gru_cell(Tensor(np.ones((1, 3))), h, Tensor(np.zeros((3, 6))), Tensor(np.zeros((2, 6))),
                   Tensor(np.zeros(6)))
    assert np.allclose(out.data, 0.5 * h.data)


def test_gru_cell_shape_error():
    with pytest.raises(ShapeError):
        gru_cell(Tensor(np.ones((1, 3))), Tensor(np.zeros((1, 2))), Tensor(np.zeros((3, 5))),
                 Tensor(np.zeros((2, 6))), Tensor(np.zeros(6)))


def test_cross_entropy_uniform_four_classes():
    loss = weighted_cross_entropy(Tensor(np.zeros((1, 4))), [2], np.ones(4))
    assert math.isclose(float(loss.data), math.log(4), rel_tol=1e-12)


def test_cross_entropy_two_sample_hand_value():
    scores = np.array([[1.0, 0.0, -1.0], [0.5, 0.5, 2.0]])
    w = np.array([0.5, 1.0, 2.0])
    y = [0, 2]
    p0 = math.exp(1) / (math.exp(1) + 1 + math.exp(-1))
    p1 = math.exp(2) / (2 * math.exp(0.5) + math.exp(2))
    expected = -(0.5 * math.log(p0) + 2.0 * math.log(p1)) / 2
    assert abs(float(weighted_cross_entropy(Tensor(scores), y, w).data) - expected) < 1e-9


@given(arrays(np.float64, (4, 3), elements=finite), st.lists(st.integers(0, 2), min_size=4, max_size=4))
def test_unit_weights_equal_plain_cross_entropy(scores, y):
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    plain = -logp[np.arange(4), y].mean()
    assert abs(float(weighted_cross_entropy(Tensor(scores), y, np.ones(3)).data) - plain) < 1e-12


def test_cross_entropy_rejects_bad_targets():
    with pytest.raises(ValueError):
        weighted_cross_entropy(Tensor(np.zeros((1, 3))), [3], np.ones(3))
    with pytest.raises(ShapeError):
        weighted_cross_entropy(Tensor(np.zeros((2, 3))), [0], np.ones(3))


def test_class_weights():
    assert list(class_weights([0, 0, 0, 0, 1], 2)) == [0.5, 1.0]
    assert list(class_weights([1, 1], 3)) == [0.0, 1 / math.sqrt(2), 0.0]


@given(st.lists(st.integers(0, 5), min_size=1, max_size=60))
def test_class_weights_non_increasing_in_frequency(labels):
    w = class_weights(labels, 6)
    counts = np.bincount(labels, minlength=6)
    for a in range(6):
        for b in range(6):
            if 0 < counts[a] <= counts[b]:
                assert w[a] >= w[b]


@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    assert np.allclose(softmax(Tensor(x)).data.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=30)
@given(st.integers(8, 20), st.integers(1, 4), st.integers(0, 1000))
def test_batchnorm_train_normalises(n, k, seed):
    x = np.random.default_rng(seed).normal(3.0, 2.0, (n, k))
    out = batchnorm(Tensor(x), Tensor(np.ones(k)), Tensor(np.zeros(k)), np.zeros(k), np.ones(k), True)
    assert np.all(np.abs(out.data.mean(axis=0)) < 1e-6)
    assert np.all(np.abs(out.data.var(axis=0) - 1) < 1e-4)


def test_batchnorm_eval_uses_running_stats():
    bn = BatchNorm(2)
    bn._buffers["running_mean"][:] = [1.0, 2.0]
    bn._buffers["running_var"][:] = [4.0, 4.0]
    bn.eval()
    out = bn(Tensor(np.array([[3.0, 2.0]])))
    assert np.allclose(out.data, [[2 / math.sqrt(4 + 1e-5), 0.0]])


def test_dropout_identity_in_eval_and_scaled_in_train():
    rng = np.random.default_rng(0)
    x = Tensor(np.ones((200, 50)))
    assert dropout(x, 0.5, False, rng) is x
    y = dropout(x, 0.5, True, rng).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05


def test_adam_first_step():
    p = {"w": np.array([1.0])}
    adam_step(p, {"w": np.array([1.0])}, AdamState(), 0.1)
    assert math.isclose(p["w"][0], 0.9, abs_tol=1e-6)


def test_adam_minimises_quadratic():
    w = parameter(np.array([[3.0, -2.0]]))
    opt = Adam({"w": w}, lr=0.1)
    from cliplearn.nn import matmul
    for _ in range(300):
        opt.zero_grad()
        matmul(w * w, Tensor(np.ones((2, 1)))).backward()
        opt.step()
    assert np.all(np.abs(w.data) < 0.05)


def test_module_state_roundtrip_through_bytes():
    rng = np.random.default_rng(0)
    gru = GRU(3, 4, 2, rng)
    blob = save_weights(gru.state(), {"arch": "gru"})
    state, header = load_weights(blob)
    assert header == {"arch": "gru"}
    fresh = GRU(3, 4, 2, np.random.default_rng(1))
    fresh.load_state(state)
    seq = rng.normal(size=(2, 4, 3))
    assert np.array_equal(fresh(seq).data, gru(seq).data)


def test_load_weights_rejects_garbage():
    with pytest.raises(ValueError):
        load_weights(b"nope")


def test_load_state_shape_mismatch():
    layer = Linear(2, 2, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        layer.load_state({"W": np.zeros((3, 2))})
