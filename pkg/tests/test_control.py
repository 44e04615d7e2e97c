import math
import os

import numpy as np
import pytest

from softpinn.config.config import MPCConfigFromValues
from softpinn.control import (
    MPCController,
    PIController,
    PIState,
    Reference,
    closed_loop,
    default_mpc_config,
    generate_reference,
    input_box,
    mpc_cost,
    mpc_solve,
    pi_control,
    published_pi_config,
    save_closed_loop_log,
    zero_reference,
)
from softpinn.control.closed_loop import ControlUpdate, mean_solve_ms
from softpinn.control.pi import antagonistic_pressures
from softpinn.dynamics import DEG, NOMINAL_DOMAIN, Domain, FirstPrinciplesDynamics
from softpinn.integrators import oracle_rollout
from softpinn.networks import inflated_scaler, init_surrogate, self_loop_rollout
from softpinn.networks.mlp import MLPWeights, zero_mlp
from softpinn.networks.surrogate import SurrogateModel
from softpinn.util.csv_io import read_table
from tests.helpers import P_MAX, box, central_difference


def linear_pinc(rng: np.random.Generator) -> SurrogateModel:
    """A one-joint PINC without hidden layers: each prediction is affine in
    the scaled initial state and input
    """
    W = np.zeros((7, 2))
    W[1:3] = 0.8 * np.eye(2)
    W[3:5] = 0.5 * np.eye(2) + 0.1 * rng.normal(size=(2, 2))
    W[5:7] = 0.05 * rng.normal(size=(2, 2))
    return SurrogateModel(
        n=1,
        head="pinc",
        n_a=0,
        T_s=0.02,
        boundaries=box(),
        scaler=inflated_scaler(1, 0.02, box()),
        core=MLPWeights(weights=[W], biases=[np.zeros(2)]),
    )


def _config(model: SurrogateModel, **changes) -> MPCConfigFromValues:
    values = dict(max_iterations=200, tolerance=1e-12)
    values.update(changes)
    return default_mpc_config(model, P_MAX, **values)


def _constructed(model: SurrogateModel, m: int = 3):
    u_star_s = np.array([0.3, -0.2])
    x0 = model.scaler.x.unscale(np.array([0.1, -0.1]))
    u_star = model.scaler.u.unscale(u_star_s)
    ref = self_loop_rollout(model, x0, np.tile(u_star, (m, 1)), NOMINAL_DOMAIN)[1:]
    return u_star_s, x0, ref


def test_input_box_spans_the_pressure_range(rng):
    model = linear_pinc(rng)
    lower, upper = input_box(model, P_MAX)
    np.testing.assert_allclose(lower, -1.0)
    np.testing.assert_allclose(upper, 2.0 / 1.1 - 1.0)


def test_single_step_cost_is_terminal_plus_input(rng):
    model = linear_pinc(rng)
    config = _config(model, m=1, R_s=0.5)
    x0 = np.array([0.1, 0.3])
    ref = np.array([[0.05, -0.2]])
    u_s = np.array([0.2, -0.4])
    predicted = self_loop_rollout(model, x0, model.scaler.u.unscale(u_s)[None, :], NOMINAL_DOMAIN)[1]
    error = model.scaler.x.scale(ref[0]) - model.scaler.x.scale(predicted)
    expected = 0.7 * error[0] ** 2 + 0.01 * error[1] ** 2 + 0.5 * np.sum(u_s**2)
    assert mpc_cost(u_s, x0, ref, NOMINAL_DOMAIN, model, config).cost == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("m", [1, 3, 5])
def test_cost_gradient(m, rng):
    model = init_surrogate(2, head="ddpinn", n_a=2, n_n=8, n_h=2, T_s=0.02, boundaries=box(), rng=rng)
    config = default_mpc_config(model, P_MAX, m=m)
    delta = Domain(m_e=0.1, beta_g=30 * DEG)
    for _ in range(5):
        x0 = model.scaler.x.unscale(rng.uniform(-0.5, 0.5, 4))
        ref = model.scaler.x.unscale(rng.uniform(-0.5, 0.5, (m, 4)))
        u_s = rng.uniform(-0.9, 0.7, 4)
        value = mpc_cost(u_s, x0, ref, delta, model, config)
        for j in range(4):
            fd = central_difference(lambda: mpc_cost(u_s, x0, ref, delta, model, config).cost, u_s, j, h=1e-6)
            assert value.gradient[j] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_perfect_tracking_leaves_only_the_input_cost(rng):
    model = linear_pinc(rng)
    config = _config(model, R_s=0.01)
    u_star_s, x0, ref = _constructed(model)
    cost = mpc_cost(u_star_s, x0, ref, NOMINAL_DOMAIN, model, config).cost
    assert cost == pytest.approx(3 * 0.01 * np.sum(u_star_s**2), rel=1e-9)


def test_solver_recovers_a_constructed_optimum(rng):
    model = linear_pinc(rng)
    config = _config(model, R_s=0.0)
    u_star_s, x0, ref = _constructed(model)
    solution = mpc_solve(x0, ref, NOMINAL_DOMAIN, model, config)
    assert solution.status == "improved"
    np.testing.assert_allclose(solution.u_s, u_star_s, atol=1e-2)
    np.testing.assert_allclose(solution.u, model.scaler.u.unscale(solution.u_s))


def test_unreachable_reference_saturates(rng):
    model = linear_pinc(rng)
    config = _config(model)
    x0 = np.zeros(2)
    ref = model.scaler.x.unscale(np.tile([5.0, 0.0], (3, 1)))
    solution = mpc_solve(x0, ref, NOMINAL_DOMAIN, model, config)
    lower, upper = config.u_min, config.u_max
    assert np.all(solution.u_s >= lower) and np.all(solution.u_s <= upper)
    assert np.any(np.isclose(solution.u_s, lower) | np.isclose(solution.u_s, upper))


def test_optimal_warm_start_is_returned_unchanged(rng):
    model = linear_pinc(rng)
    config = _config(model, R_s=0.0)
    u_star_s, x0, ref = _constructed(model)
    solution = mpc_solve(x0, ref, NOMINAL_DOMAIN, model, config, warm_start=u_star_s)
    assert solution.iterations <= 1
    assert solution.status == "warm_start"
    np.testing.assert_array_equal(solution.u_s, u_star_s)


def test_solve_is_deterministic(rng):
    model = init_surrogate(2, head="ddpinn", n_a=2, n_n=8, n_h=1, T_s=0.02, boundaries=box(), rng=rng)
    config = default_mpc_config(model, P_MAX)
    x0 = model.scaler.x.unscale(rng.uniform(-0.5, 0.5, 4))
    ref = model.scaler.x.unscale(rng.uniform(-0.5, 0.5, (3, 4)))
    warm = np.zeros(4)
    a = mpc_solve(x0, ref, NOMINAL_DOMAIN, model, config, warm_start=warm)
    b = mpc_solve(x0, ref, NOMINAL_DOMAIN, model, config, warm_start=warm)
    np.testing.assert_array_equal(a.u_s, b.u_s)
    assert np.all(a.u_s >= config.u_min) and np.all(a.u_s <= config.u_max)


def test_pi_without_error_commands_the_mean_pressure():
    config = published_pi_config(5, P_MAX)
    out = pi_control(np.zeros(5), np.zeros(5), PIState.empty(5), config)
    np.testing.assert_array_equal(out.u, np.full(10, 35000.0))
    assert not np.any(out.saturated)


def test_pi_saturates_and_freezes_the_integrator():
    config = published_pi_config(2, P_MAX)
    state = PIState(integral=np.array([0.01, 0.0]))
    out = pi_control(np.array([40 * DEG, 0.0]), np.zeros(2), state, config)
    assert out.u[0] == P_MAX and out.u[1] == 0.0
    np.testing.assert_array_equal(out.u[2:], [35000.0, 35000.0])
    assert out.saturated.tolist() == [True, False]
    assert out.state.integral[0] == 0.01


def test_antagonistic_mapping_is_symmetric(rng):
    delta_p = rng.uniform(-30000, 30000, 4)
    u = antagonistic_pressures(delta_p, P_MAX)
    np.testing.assert_allclose(u[0::2] + u[1::2], P_MAX)
    np.testing.assert_allclose(u[0::2] - u[1::2], delta_p)


def test_pi_integrator_stays_clamped(rng):
    config = published_pi_config(3, P_MAX)
    state = PIState.empty(3)
    for _ in range(5000):
        out = pi_control(rng.uniform(-0.5, 0.5, 3), np.zeros(3), state, config)
        state = out.state
        assert np.all(np.abs(state.integral) <= config.integrator_clamp)
        assert np.all(out.u >= 0) and np.all(out.u <= P_MAX)


def test_reference_stays_within_its_amplitude():
    reference = generate_reference(5, 60.0, np.random.default_rng(3))
    assert reference.q_d.shape == (3001, 5)
    assert np.max(np.abs(reference.q_d)) <= 18 * DEG + 1e-12
    np.testing.assert_allclose(reference.qd_d, np.gradient(reference.q_d, 0.02, axis=0))


def test_reference_is_reproducible():
    a = generate_reference(3, 10.0, np.random.default_rng(9))
    b = generate_reference(3, 10.0, np.random.default_rng(9))
    np.testing.assert_array_equal(a.q_d, b.q_d)


def test_reference_velocity_matches_the_experiments():
    speeds = [
        np.mean(np.abs(generate_reference(5, 60.0, np.random.default_rng(seed)).qd_d))
        for seed in range(10)
    ]
    assert 9.7 <= math.degrees(float(np.mean(speeds))) <= 13.7


def test_reference_window():
    reference = generate_reference(2, 2.0, np.random.default_rng(1))
    np.testing.assert_allclose(reference.window(0.0, 3, 0.02), reference.states()[1:4], atol=1e-15)
    np.testing.assert_array_equal(reference.window(10.0, 2, 0.02), np.tile(reference.states()[-1], (2, 1)))
    with pytest.raises(ValueError):
        Reference(T_s=0.02, q_d=np.zeros((1, 2)), qd_d=np.zeros((1, 2)))


def test_pi_holds_the_rest_position(small_robot, tmp_path):
    result = closed_loop(
        FirstPrinciplesDynamics(small_robot),
        PIController(published_pi_config(2, P_MAX)),
        zero_reference(2, 0.2),
        NOMINAL_DOMAIN,
    )
    assert result.metrics.mae < 1e-9
    assert result.log.t.shape == (201,)
    assert result.metrics.update_rate == pytest.approx(201 / 0.2)

    path = os.path.join(tmp_path, "log.csv")
    save_closed_loop_log(path, result.log)
    table = read_table(path, kind="closed_loop")
    assert table.columns == ["t", "q1", "q2", "q_d1", "q_d2", "u11", "u12", "u21", "u22", "solve_ms"]
    np.testing.assert_array_equal(table.column("u11"), result.log.u[:, 0])


def test_mpc_holds_the_rest_position(small_robot):
    model = init_surrogate(2, head="ddpinn", n_a=2, n_n=8, n_h=1, T_s=0.02, boundaries=box(), rng=np.random.default_rng(0))
    model.core = zero_mlp(model.core.sizes())
    controller = MPCController(model, default_mpc_config(model, P_MAX), NOMINAL_DOMAIN, timing="fixed")
    result = closed_loop(FirstPrinciplesDynamics(small_robot), controller, zero_reference(2, 0.2), NOMINAL_DOMAIN)
    assert result.metrics.mae < 1e-9
    assert result.metrics.update_rate == pytest.approx(11 / 0.2)
    np.testing.assert_allclose(result.log.u[:, 0], result.log.u[:, 1])


class _ConstantController:
    name = "constant"

    def __init__(self, u: np.ndarray):
        self.u = u

    def reset(self) -> None:
        pass

    def update(self, t, x, reference) -> ControlUpdate:
        return ControlUpdate(u=self.u, hold=1.0, solve_time=0.0, warm_start=False)


def test_plant_is_integrated_at_the_oracle_step(small_robot):
    fp = FirstPrinciplesDynamics(small_robot)
    u = np.array([50000.0, 20000.0, 30000.0, 40000.0])
    result = closed_loop(fp, _ConstantController(u), zero_reference(2, 0.02), NOMINAL_DOMAIN)
    truth = oracle_rollout(fp, np.zeros(4), u[None, :], NOMINAL_DOMAIN, T_s=0.02)
    np.testing.assert_allclose(result.log.x[-1], truth[1], rtol=0, atol=1e-10)
    assert result.metrics.update_rate == pytest.approx(1 / 0.02)


def test_mean_solve_time():
    assert mean_solve_ms([]) == 0.0
    assert mean_solve_ms([0.001, 0.003]) == pytest.approx(2.0)


@pytest.mark.slow
def test_pi_step_response_settles(small_robot):
    K = 401
    q_d = np.tile([5 * DEG, -5 * DEG], (K, 1))
    reference = Reference(T_s=0.02, q_d=q_d, qd_d=np.zeros_like(q_d))
    result = closed_loop(
        FirstPrinciplesDynamics(small_robot),
        PIController(published_pi_config(2, P_MAX)),
        reference,
        NOMINAL_DOMAIN,
    )
    final = result.log.x[-200:, :2]
    assert np.max(np.abs(final - q_d[0])) < 0.5 * DEG
