import math
import os

import numpy as np
import pytest

from softpinn.dynamics import DEG, Domain
from softpinn.errors import (
    DimensionMismatchError,
    NonFinitePredictionError,
    StaleCacheError,
)
from softpinn.networks import (
    MinMax,
    ansatz_dt,
    ansatz_eval,
    gru_rollout,
    gru_step,
    inflated_scaler,
    init_gru,
    init_mlp,
    init_surrogate,
    load_gru,
    load_surrogate,
    mlp_backward,
    mlp_forward,
    save_gru,
    save_surrogate,
    self_loop_rollout,
    surrogate_dt,
    surrogate_predict,
)
from softpinn.networks.ansatz import ansatz_backward, ansatz_pass
from softpinn.networks.gru import (
    GRUWeights,
    dropout_masks,
    gru_step_backward,
    gru_step_forward,
)
from softpinn.networks.mlp import MLPWeights, zero_mlp
from softpinn.networks.surrogate import (
    SurrogateModel,
    predict_scaled,
    surrogate_backward,
    surrogate_forward,
)
from tests.helpers import box, central_difference


def _surrogate(head, rng, n=2, n_h=2):
    return init_surrogate(
        n,
        head=head,
        n_a=2 if head == "ddpinn" else 0,
        n_n=8,
        n_h=n_h,
        T_s=0.02,
        boundaries=box(),
        rng=rng,
    )


def _scaled_rows(rng, model, B):
    dim = model.dim
    return (
        rng.uniform(0, model.kappa, B),
        rng.uniform(-1, 1, (B, dim)),
        rng.uniform(-1, 1, (B, dim)),
        rng.uniform(-1, 1, (B, 2)),
    )


def test_scaler_round_trip(rng):
    scaler = inflated_scaler(3, 0.02, box())
    x = rng.uniform(-0.5, 0.5, (50, 6))
    np.testing.assert_allclose(scaler.x.unscale(scaler.x.scale(x)), x, atol=1e-12)
    u = rng.uniform(0, 70000, (50, 6))
    np.testing.assert_allclose(scaler.u.unscale(scaler.u.scale(u)), u, rtol=1e-12)
    np.testing.assert_allclose(scaler.u.scale(np.zeros(6)), -np.ones(6))
    np.testing.assert_allclose(scaler.t.scale(np.array([1.1 * 0.02])), [1.0])


def test_scaler_rejects_empty_range():
    with pytest.raises(ValueError):
        MinMax(np.zeros(2), np.array([1.0, 0.0]))


def test_mlp_zero_weights_give_zero_output(rng):
    out, _ = mlp_forward(zero_mlp([5, 8, 8, 3]), rng.normal(size=(4, 5)))
    np.testing.assert_array_equal(out, np.zeros((4, 3)))


def test_single_layer_is_affine(rng):
    W = rng.normal(size=(4, 3))
    b = rng.normal(size=3)
    X = rng.normal(size=(6, 4))
    out, _ = mlp_forward(MLPWeights(weights=[W], biases=[b]), X)
    np.testing.assert_allclose(out, X @ W + b, rtol=1e-14)


def test_mlp_rejects_wrong_width(rng):
    with pytest.raises(DimensionMismatchError):
        mlp_forward(init_mlp([4, 3], rng), np.zeros((2, 5)))


def test_mlp_input_gradient_matches_finite_differences(rng):
    core = init_mlp([4, 10, 10, 3], rng)
    X = rng.normal(size=(1, 4))
    g_out = rng.normal(size=(1, 3))
    out, cache = mlp_forward(core, X)
    _, gX = mlp_backward(core, cache, g_out)
    for j in range(4):
        fd = central_difference(lambda: float(np.sum(g_out * mlp_forward(core, X)[0])), X, (0, j))
        assert gX[0, j] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_mlp_weight_gradients_of_half_squared_norm(rng):
    core = init_mlp([3, 6, 5, 2], rng)
    X = rng.normal(size=(7, 3))

    def loss() -> float:
        return 0.5 * float(np.sum(mlp_forward(core, X)[0] ** 2))

    out, cache = mlp_forward(core, X)
    grads, _ = mlp_backward(core, cache, out)
    for param, grad in zip(core.parameters(), grads):
        assert grad.shape == param.shape
        for index in np.ndindex(param.shape):
            fd = central_difference(loss, param, index)
            assert grad[index] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_zero_output_gradient_gives_zero_gradients(rng):
    core = init_mlp([3, 6, 2], rng)
    out, cache = mlp_forward(core, rng.normal(size=(4, 3)))
    grads, gX = mlp_backward(core, cache, np.zeros_like(out))
    assert all(np.all(g == 0) for g in grads)
    assert np.all(gX == 0)


def test_batch_gradient_is_sum_of_sample_gradients(rng):
    core = init_mlp([3, 6, 2], rng)
    X = rng.normal(size=(5, 3))
    G = rng.normal(size=(5, 2))
    _, cache = mlp_forward(core, X)
    total, _ = mlp_backward(core, cache, G)
    summed = [np.zeros_like(p) for p in core.parameters()]
    for i in range(5):
        _, c = mlp_forward(core, X[i : i + 1])
        for acc, g in zip(summed, mlp_backward(core, c, G[i : i + 1])[0]):
            acc += g
    for a, b in zip(total, summed):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_tangent_matches_finite_differences(rng):
    core = init_mlp([4, 9, 9, 3], rng)
    X = rng.normal(size=(3, 4))
    direction = np.array([1.0, 0.0, 0.0, 0.0])
    _, cache = mlp_forward(core, X, direction=direction)
    h = 1e-5
    fd = (mlp_forward(core, X + h * direction)[0] - mlp_forward(core, X - h * direction)[0]) / (2 * h)
    np.testing.assert_allclose(cache.tangent_out, fd, rtol=1e-6, atol=1e-9)


def test_tangent_loss_gradients_match_finite_differences(rng):
    core = init_mlp([3, 5, 4, 2], rng)
    X = rng.normal(size=(4, 3))
    direction = np.array([0.0, 1.0, 0.0])
    g_out = rng.normal(size=(4, 2))
    g_tan = rng.normal(size=(4, 2))

    def loss() -> float:
        out, c = mlp_forward(core, X, direction=direction)
        return float(np.sum(g_out * out) + np.sum(g_tan * c.tangent_out))

    _, cache = mlp_forward(core, X, direction=direction)
    grads, _ = mlp_backward(core, cache, g_out, g_tan)
    for param, grad in zip(core.parameters(), grads):
        for index in np.ndindex(param.shape):
            assert grad[index] == pytest.approx(
                central_difference(loss, param, index), rel=1e-6, abs=1e-9
            )


def test_backward_rejects_stale_cache(rng):
    core = init_mlp([2, 3, 1], rng)
    out, cache = mlp_forward(core, np.zeros((1, 2)))
    core.touch()
    with pytest.raises(StaleCacheError):
        mlp_backward(core, cache, out)


def test_ansatz_vanishes_at_zero(rng):
    for _ in range(20):
        alpha = rng.normal(scale=3.0, size=4 * 6 * 3)
        assert np.all(ansatz_eval(alpha, 0.0, 6) == 0.0)


def test_single_undamped_term_is_a_sine():
    alpha = np.array([1.0, 1.0, 0.0, 0.0])
    for t in (0.3, 1.0, 2.5):
        assert ansatz_eval(alpha, t, 1)[0] == pytest.approx(math.sin(t), rel=1e-14)
        assert ansatz_dt(alpha, t, 1)[0] == pytest.approx(math.cos(t), rel=1e-14)


def test_ansatz_matches_scalar_loop(rng):
    dim, n_a = 4, 3
    alpha = rng.normal(size=4 * n_a * dim)
    t = 0.7
    expected = np.zeros(dim)
    for k in range(n_a):
        for j in range(dim):
            a1, a2, a3, a4 = (alpha[(b * n_a + k) * dim + j] for b in range(4))
            expected[j] += a1 * (math.exp(-a4 * t) * math.sin(a2 * t + a3) - math.sin(a3))
    np.testing.assert_allclose(ansatz_eval(alpha, t, dim), expected, rtol=1e-12)


def test_ansatz_derivative_matches_finite_differences(rng):
    h = 1e-5
    for _ in range(20):
        alpha = rng.normal(size=4 * 2 * 3)
        t = rng.uniform(0, 1.1)
        fd = (ansatz_eval(alpha, t + h, 3) - ansatz_eval(alpha, t - h, 3)) / (2 * h)
        np.testing.assert_allclose(ansatz_dt(alpha, t, 3), fd, rtol=1e-7, atol=1e-9)


def test_ansatz_without_amplitude_is_constant(rng):
    alpha = rng.normal(size=4 * 2 * 3)
    alpha[: 2 * 3] = 0.0
    assert np.all(ansatz_dt(alpha, 0.4, 3) == 0.0)


def test_ansatz_coefficient_gradients(rng):
    dim, n_a = 2, 2
    alpha = rng.normal(size=(3, 4 * n_a * dim))
    t = rng.uniform(0, 1.1, 3)
    g_value = rng.normal(size=(3, dim))
    g_rate = rng.normal(size=(3, dim))

    def loss() -> float:
        return float(
            np.sum(g_value * ansatz_eval(alpha, t, dim)) + np.sum(g_rate * ansatz_dt(alpha, t, dim))
        )

    grad = ansatz_backward(ansatz_pass(alpha, t, dim), g_value, g_rate)
    for index in np.ndindex(alpha.shape):
        assert grad[index] == pytest.approx(central_difference(loss, alpha, index), rel=1e-6, abs=1e-9)


def test_ddpinn_reproduces_the_initial_state(rng):
    for _ in range(10):
        model = _surrogate("ddpinn", rng)
        for _ in range(100):
            _, X0s, U0s, Ds = _scaled_rows(rng, model, 1)
            out = predict_scaled(model, np.zeros(1), X0s, U0s, Ds)
            np.testing.assert_allclose(out, X0s, atol=1e-12)
    x0 = np.array([0.1, -0.2, 0.5, -1.0])
    np.testing.assert_allclose(
        surrogate_predict(model, 0.0, x0, np.full(4, 30000.0), Domain(0.1, 0.3)), x0, atol=1e-12
    )


def test_pinc_with_zero_weights_predicts_zero(rng):
    model = _surrogate("pinc", rng)
    model.core = zero_mlp(model.core.sizes())
    _, X0s, U0s, Ds = _scaled_rows(rng, model, 5)
    assert np.all(predict_scaled(model, np.zeros(5), X0s, U0s, Ds) == 0.0)


@pytest.mark.parametrize("head", ["pinc", "ddpinn"])
def test_surrogate_time_derivative(head, rng):
    model = _surrogate(head, rng)
    x0 = np.array([0.1, -0.2, 0.5, -1.0])
    u0 = np.array([30000.0, 20000.0, 10000.0, 50000.0])
    delta = Domain(0.1, 30 * DEG)
    h = 1e-8
    for t in rng.uniform(0.001, 0.02, 20):
        fd = (surrogate_predict(model, t + h, x0, u0, delta) - surrogate_predict(model, t - h, x0, u0, delta)) / (2 * h)
        np.testing.assert_allclose(surrogate_dt(model, t, x0, u0, delta), fd, rtol=1e-6, atol=1e-6)


def test_ddpinn_without_amplitude_has_zero_rate(rng):
    model = _surrogate("ddpinn", rng)
    width = 2 * model.dim
    model.core.weights[-1][:, :width] = 0.0
    model.core.biases[-1][:width] = 0.0
    rate = surrogate_dt(model, 0.01, np.ones(4) * 0.1, np.full(4, 1e4), Domain(0.0, 0.0))
    assert np.all(rate == 0.0)


def test_linear_pinc_rate_is_the_time_column(rng):
    model = _surrogate("pinc", rng, n_h=0)
    W = model.core.weights[0]
    rate = surrogate_dt(model, 0.013, np.zeros(4), np.full(4, 1e4), Domain(0.0, 0.0))
    expected = W[0] * (2.0 / model.kappa) / (model.scaler.x.factor * model.T_s)
    np.testing.assert_allclose(rate, expected, rtol=1e-12)


@pytest.mark.parametrize("head", ["pinc", "ddpinn"])
def test_surrogate_gradients(head, rng):
    model = _surrogate(head, rng)
    tau, X0s, U0s, Ds = _scaled_rows(rng, model, 3)
    g_x = rng.normal(size=X0s.shape)
    g_r = rng.normal(size=X0s.shape)

    def loss() -> float:
        fwd = surrogate_forward(model, tau, X0s, U0s, Ds, rate=True)
        return float(np.sum(g_x * fwd.x_s) + np.sum(g_r * fwd.rate_s))

    fwd = surrogate_forward(model, tau, X0s, U0s, Ds, rate=True)
    grads = surrogate_backward(model, fwd, g_x, g_r)
    for param, grad in zip(model.core.parameters(), grads.params):
        for _ in range(6):
            index = tuple(rng.integers(0, s) for s in param.shape)
            assert grad[index] == pytest.approx(central_difference(loss, param, index), rel=1e-6, abs=1e-8)
    for arr, grad in ((X0s, grads.x0), (U0s, grads.u0), (Ds, grads.delta)):
        for index in np.ndindex(arr.shape):
            assert grad[index] == pytest.approx(central_difference(loss, arr, index), rel=1e-6, abs=1e-8)


def test_zero_core_ddpinn_rollout_stays_put(rng):
    model = _surrogate("ddpinn", rng)
    model.core = zero_mlp(model.core.sizes())
    x0 = np.array([0.2, -0.1, 0.3, 0.0])
    traj = self_loop_rollout(model, x0, np.full((25, 4), 40000.0), Domain(0.1, 0.0))
    assert traj.shape == (26, 4)
    np.testing.assert_allclose(traj, np.tile(x0, (26, 1)), atol=1e-12)


def test_rollout_step_is_a_prediction(rng):
    model = _surrogate("pinc", rng)
    x0 = np.array([0.2, -0.1, 0.3, 0.0])
    u = np.array([[40000.0, 30000.0, 20000.0, 10000.0]])
    delta = Domain(0.05, 0.4)
    traj = self_loop_rollout(model, x0, u, delta)
    np.testing.assert_allclose(traj[1], surrogate_predict(model, model.T_s, x0, u[0], delta), rtol=1e-12)


def test_rollout_reports_nonfinite_prediction(rng):
    model = _surrogate("pinc", rng)
    model.core.biases[-1][:] = np.inf
    with pytest.raises(NonFinitePredictionError) as info:
        self_loop_rollout(model, np.zeros(4), np.zeros((3, 4)), Domain(0.0, 0.0))
    assert info.value.step_index == 0


def _gru(rng, hidden=5, n_h=2) -> GRUWeights:
    return init_gru(inflated_scaler(2, 0.02, box()), 0.02, hidden=hidden, n_h=n_h, rng=rng)


def test_zero_gru_halves_the_hidden_state(rng):
    w = _gru(rng, n_h=1)
    for p in w.parameters():
        p[...] = 0.0
    h = rng.uniform(-1, 1, (1, 5))
    h_next, x = gru_step(w, h, np.array([0.1, 0.2, 0.0, 0.3]), np.full(4, 1e4))
    np.testing.assert_allclose(h_next, 0.5 * h, rtol=1e-15)
    np.testing.assert_allclose(x, np.zeros(4), atol=1e-15)


def test_gru_hidden_state_stays_bounded(rng):
    w = _gru(rng)
    for p in w.parameters():
        p *= 20.0
    h = rng.uniform(-0.999, 0.999, (50, 2, 5))
    h_next, _, _ = gru_step_forward(w, h, rng.uniform(-3, 3, (50, 4)), rng.uniform(-3, 3, (50, 4)))
    assert np.all(np.abs(h_next) <= 1.0)


@pytest.mark.parametrize("dropout", [False, True])
def test_gru_step_gradients(dropout, rng):
    w = _gru(rng)
    h = rng.uniform(-0.5, 0.5, (2, 2, 5))
    x_s = rng.uniform(-1, 1, (2, 4))
    u_s = rng.uniform(-1, 1, (2, 4))
    masks = dropout_masks(w, 2, 0.3, rng) if dropout else None
    g_h = rng.normal(size=h.shape)
    g_x = rng.normal(size=(2, 4))

    def loss() -> float:
        h_next, x_next, _ = gru_step_forward(w, h, x_s, u_s, masks)
        return float(np.sum(g_h * h_next) + np.sum(g_x * x_next))

    _, _, cache = gru_step_forward(w, h, x_s, u_s, masks)
    grads, gh, gx, gu = gru_step_backward(w, cache, g_h, g_x)
    for param, grad in zip(w.parameters(), grads):
        assert grad.shape == param.shape
        for _ in range(8):
            index = tuple(rng.integers(0, s) for s in param.shape)
            assert grad[index] == pytest.approx(central_difference(loss, param, index), rel=1e-6, abs=1e-9)
    for arr, grad in ((h, gh), (x_s, gx), (u_s, gu)):
        for index in np.ndindex(arr.shape):
            assert grad[index] == pytest.approx(central_difference(loss, arr, index), rel=1e-6, abs=1e-9)


def test_gru_rollout_starts_at_the_initial_state(rng):
    w = _gru(rng)
    x0 = np.array([0.1, 0.0, -0.2, 0.3])
    traj = gru_rollout(w, x0, np.full((10, 4), 30000.0))
    assert traj.shape == (11, 4)
    np.testing.assert_array_equal(traj[0], x0)
    assert np.all(np.isfinite(traj))


def test_weight_files_preserve_predictions(tmp_path, rng):
    x0 = np.array([0.1, 0.0, -0.2, 0.3])
    u = np.full((5, 4), 30000.0)
    delta = Domain(0.1, 45 * DEG)
    for head in ("pinc", "ddpinn"):
        model = _surrogate(head, rng)
        path = os.path.join(tmp_path, f"{head}.json")
        save_surrogate(model, path)
        loaded = load_surrogate(path)
        assert isinstance(loaded, SurrogateModel)
        assert (loaded.head, loaded.n_a, loaded.T_s) == (model.head, model.n_a, model.T_s)
        assert loaded.kappa == model.kappa
        np.testing.assert_allclose(
            self_loop_rollout(loaded, x0, u, delta), self_loop_rollout(model, x0, u, delta), rtol=1e-12, atol=1e-12
        )
    w = _gru(rng)
    path = os.path.join(tmp_path, "gru.json")
    save_gru(w, path)
    np.testing.assert_allclose(gru_rollout(load_gru(path), x0, u), gru_rollout(w, x0, u), rtol=1e-12, atol=1e-12)
