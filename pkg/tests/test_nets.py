import numpy as np
import pytest

from herlase.nets import (
    AdamState,
    DimensionError,
    DivergenceError,
    Mlp,
    adam_step,
    polyak_update,
)

from oracles import flatten_params, gradcheck_probe, input_fd_gradient


def test_forward_zero_weights_returns_bias():
    mlp = Mlp([3, 2], output_activation="linear")
    mlp.weights[0][...] = 0.0
    mlp.biases[0][...] = [0.5, -1.25]
    for x in (np.zeros(3), np.ones(3), np.array([3.0, -2.0, 7.0])):
        assert np.array_equal(mlp.forward(x), [0.5, -1.25])


def test_forward_single_linear_layer_hand_check():
    mlp = Mlp([1, 1], output_activation="linear")
    mlp.weights[0][...] = 2.0
    mlp.biases[0][...] = 1.0
    assert mlp.forward(np.array([3.0]))[0] == 7.0


def test_forward_matches_straight_line_recomputation():
    # oracle: redo the matrix arithmetic directly on the stored weights
    rng = np.random.default_rng(42)
    mlp = Mlp([4, 8, 2], hidden_activation="relu", output_activation="linear", rng=rng)
    x = np.random.default_rng(7).normal(size=4)
    h = np.maximum(mlp.weights[0] @ x + mlp.biases[0], 0.0)
    expected = mlp.weights[1] @ h + mlp.biases[1]
    assert np.allclose(mlp.forward(x), expected, rtol=0, atol=1e-14)


def test_forward_is_pure_and_deterministic():
    mlp = Mlp([5, 16, 3], rng=np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=5)
    first = mlp.forward(x)
    for _ in range(5):
        assert np.array_equal(mlp.forward(x), first)


def test_forward_batched_matches_loop():
    mlp = Mlp([6, 32, 4], output_activation="tanh", rng=np.random.default_rng(3))
    xs = np.random.default_rng(4).normal(size=(10, 6))
    batched = mlp.forward(xs)
    for i in range(10):
        assert np.allclose(batched[i], mlp.forward(xs[i]), atol=1e-14)


def test_forward_dimension_mismatch():
    mlp = Mlp([3, 2])
    with pytest.raises(DimensionError):
        mlp.forward(np.zeros(4))


def test_backward_linear_net_hand_derivative():
    mlp = Mlp([1, 1], output_activation="linear")
    mlp.weights[0][...] = 2.0
    mlp.biases[0][...] = 1.0
    x = np.array([3.5])
    _, cache = mlp.forward_cached(x)
    grads, input_grad = mlp.backward(cache, np.array([1.0]))
    assert grads[0][0, 0] == 3.5  # dL/dw = x
    assert grads[1][0] == 1.0  # dL/db = 1
    assert input_grad[0] == 2.0  # dL/dx = w


def test_backward_zero_upstream_gives_zero_gradients():
    mlp = Mlp([4, 8, 3], rng=np.random.default_rng(5))
    x = np.random.default_rng(6).normal(size=4)
    _, cache = mlp.forward_cached(x)
    grads, input_grad = mlp.backward(cache, np.zeros(3))
    assert all(np.all(g == 0.0) for g in grads)
    assert np.all(input_grad == 0.0)


def test_backward_matches_finite_differences_tanh_net():
    rng = np.random.default_rng(11)
    mlp = Mlp([3, 5, 2], hidden_activation="tanh", output_activation="tanh", rng=rng)
    for _ in range(10):
        analytic, numeric = gradcheck_probe(mlp, rng, h=1e-5)
        assert abs(analytic - numeric) <= 1e-4 * max(1e-8, abs(numeric))


def test_backward_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    mlp = Mlp([4, 6, 3], hidden_activation="tanh", output_activation="sigmoid", rng=rng)
    x = rng.normal(size=4)
    upstream = rng.normal(size=3)
    _, cache = mlp.forward_cached(x)
    _, input_grad = mlp.backward(cache, upstream)
    numeric = input_fd_gradient(mlp, x, upstream)
    assert np.allclose(input_grad, numeric, rtol=1e-5, atol=1e-8)


def test_backward_batch_sums_per_sample_gradients():
    rng = np.random.default_rng(13)
    mlp = Mlp([3, 7, 2], rng=rng)
    xs = rng.normal(size=(5, 3))
    ups = rng.normal(size=(5, 2))
    _, cache = mlp.forward_cached(xs)
    grads, _ = mlp.backward(cache, ups)
    summed = None
    for i in range(5):
        _, c = mlp.forward_cached(xs[i])
        g, _ = mlp.backward(c, ups[i])
        flat = flatten_params(g)
        summed = flat if summed is None else summed + flat
    assert np.allclose(flatten_params(grads), summed, atol=1e-12)


def test_adam_zero_gradient_is_identity():
    mlp = Mlp([3, 4, 2], rng=np.random.default_rng(8))
    params = mlp.parameters()
    before = [p.copy() for p in params]
    state = AdamState.for_params(params, learning_rate=0.5)
    adam_step(params, [np.zeros_like(p) for p in params], state)
    assert all(np.array_equal(b, p) for b, p in zip(before, params))
    assert state.step_count == 1


def test_adam_descends_against_constant_gradient():
    params = [np.zeros(3)]
    grads = [np.array([1.0, -2.0, 0.5])]
    state = AdamState.for_params(params, learning_rate=1e-2)
    for _ in range(50):
        adam_step(params, grads, state)
    assert np.all(np.sign(params[0]) == -np.sign(grads[0]))


def test_adam_first_step_is_bias_corrected_unit_update():
    params = [np.array([0.0])]
    state = AdamState.for_params(params, learning_rate=1e-3)
    adam_step(params, [np.array([1.0])], state)
    # m_hat = v_hat = 1 after correction, so delta = -lr / (1 + eps)
    assert params[0][0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_rejects_non_finite_gradient():
    params = [np.zeros(2)]
    state = AdamState.for_params(params, learning_rate=1e-3)
    with pytest.raises(DivergenceError):
        adam_step(params, [np.array([1.0, np.nan])], state)


def test_adam_shape_mismatch():
    params = [np.zeros(2)]
    state = AdamState.for_params(params, learning_rate=1e-3)
    with pytest.raises(DimensionError):
        adam_step(params, [np.zeros(3)], state)


def test_polyak_extremes_and_closed_form():
    rng = np.random.default_rng(21)
    online = Mlp([3, 4, 2], rng=rng)
    target0 = Mlp([3, 4, 2], rng=rng)

    frozen = target0.copy()
    polyak_update(frozen, online, tau=1.0)
    assert all(
        np.array_equal(a, b) for a, b in zip(frozen.parameters(), target0.parameters())
    )

    snapped = target0.copy()
    polyak_update(snapped, online, tau=0.0)
    assert all(
        np.array_equal(a, b) for a, b in zip(snapped.parameters(), online.parameters())
    )

    twice = target0.copy()
    polyak_update(twice, online, tau=0.95)
    polyak_update(twice, online, tau=0.95)
    for t, t0, o in zip(twice.parameters(), target0.parameters(), online.parameters()):
        assert np.allclose(t, 0.9025 * t0 + 0.0975 * o, atol=1e-12)


def test_weight_init_bounds_and_seeding():
    a = Mlp([10, 20, 5], rng=np.random.default_rng(99))
    b = Mlp([10, 20, 5], rng=np.random.default_rng(99))
    for wa, wb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(wa, wb)
    assert np.max(np.abs(a.weights[0])) <= 1.0 / np.sqrt(10)
    assert np.max(np.abs(a.weights[1])) <= 1.0 / np.sqrt(20)
    assert np.all(a.biases[0] == 0.0)
