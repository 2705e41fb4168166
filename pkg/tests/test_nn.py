import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hostload.nn import (DivergenceError, SgdConfig, ShapeError, clip_global_norm, global_norm, matmul,
                         relu, relu_prime, sigmoid, sigmoid_prime, sgd_step, tanh_prime, xavier_init)

finite = st.floats(-50, 50, allow_nan=False)


def test_matmul_hand_value():
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])


def test_matmul_rejects_mismatch():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        matmul(np.ones(3), np.ones((3, 1)))


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(-1000.0) == 0.0
    assert sigmoid(1000.0) == 1.0
    assert sigmoid(2.0) == pytest.approx(1 / (1 + np.exp(-2.0)), rel=1e-15)


@given(arrays(np.float64, 8, elements=finite))
def test_activation_ranges(x):
    s = sigmoid(x)
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(np.abs(np.tanh(x)) <= 1)
    assert np.all(relu(x) >= 0)


@given(st.floats(-5, 5))
def test_derivatives_match_finite_differences(x):
    h = 1e-6
    num = (sigmoid(x + h) - sigmoid(x - h)) / (2 * h)
    assert sigmoid_prime(sigmoid(x)) == pytest.approx(num, abs=1e-8)
    num = (np.tanh(x + h) - np.tanh(x - h)) / (2 * h)
    assert tanh_prime(np.tanh(x)) == pytest.approx(num, abs=1e-8)


def test_relu_subgradient_at_zero():
    assert list(relu_prime(np.array([-1.0, 0.0, 2.0]))) == [0.0, 0.0, 1.0]


def test_xavier_bounds_and_mean():
    w = xavier_init(128, 128, 0)
    limit = np.sqrt(6 / 256)
    assert w.shape == (128, 128)
    assert np.all(np.abs(w) <= limit)
    assert abs(w.mean()) < 0.01


def test_xavier_seeded_and_rejects_bad_dims():
    assert np.array_equal(xavier_init(3, 4, 7), xavier_init(3, 4, 7))
    with pytest.raises(ShapeError):
        xavier_init(0, 4, 0)


def test_clip_scales_to_norm():
    out = clip_global_norm([np.array([6.0, 8.0])], 5.0)
    assert np.allclose(out[0], [3.0, 4.0])


def test_clip_leaves_small_gradients():
    g = {"a": np.array([0.3, 0.4])}
    assert np.array_equal(clip_global_norm(g, 5.0)["a"], g["a"])


def test_clip_non_finite_raises():
    with pytest.raises(DivergenceError):
        clip_global_norm([np.array([np.nan, 1.0])], 5.0)


@given(st.lists(arrays(np.float64, 3, elements=finite), min_size=1, max_size=4),
       st.floats(0.1, 10))
def test_clip_norm_bound(grads, max_norm):
    out = clip_global_norm(grads, max_norm)
    assert global_norm(out) <= max_norm * (1 + 1e-12)
    norm = global_norm(grads)
    if norm > 0:
        # direction is preserved
        scale = min(1.0, max_norm / norm)
        for a, b in zip(out, grads):
            assert np.allclose(a, b * scale)


def test_sgd_momentum_two_steps():
    cfg = SgdConfig(learning_rate=0.1, momentum=0.9)
    p = {"w": np.array([1.0])}
    g = {"w": np.array([1.0])}
    p1, v = sgd_step(p, g, cfg)
    p2, _ = sgd_step(p1, g, cfg, v)
    assert p2["w"][0] == pytest.approx(1.0 - 0.1 - 0.19, abs=1e-15)


def test_sgd_does_not_mutate_and_checks_shapes():
    p = {"w": np.zeros(2)}
    sgd_step(p, {"w": np.ones(2)}, SgdConfig())
    assert np.array_equal(p["w"], np.zeros(2))
    with pytest.raises(ShapeError):
        sgd_step(p, {"w": np.ones(3)}, SgdConfig())


def test_sgd_config_validation():
    with pytest.raises(ValueError):
        SgdConfig(learning_rate=0)
    with pytest.raises(ValueError):
        SgdConfig(momentum=1.0)
