import logging
import math
import os

import numpy as np
import pytest

from softpinn.config.config import GRUTrainConfigFromValues, TrainConfigFromValues
from softpinn.dynamics import FirstPrinciplesDynamics
from softpinn.errors import EmptySearchSpaceError
from softpinn.networks import inflated_scaler, init_surrogate
from softpinn.networks.mlp import MLPWeights, zero_mlp
from softpinn.networks.surrogate import SurrogateModel, predict_scaled
from softpinn.training.asha import (
    AshaScheduler,
    Choice,
    Range,
    SearchSpace,
    asha_optimize,
)
from softpinn.config.config import AshaConfigFromValues
from softpinn.training.collocation import (
    CollocationSet,
    TransitionSet,
    data_transitions,
    sample_collocation,
)
from softpinn.training.gru_trainer import GRUTrainer, window_loss
from softpinn.networks.gru import init_gru
from softpinn.training.losses import (
    calibrate_weights,
    data_loss,
    ic_loss,
    physics_loss,
)
from softpinn.training.optim import Adam, PlateauSchedule
from softpinn.training.pinn import PinnTrainer, load_history, save_history
from tests.helpers import LinearDynamics, box, central_difference, sinusoid_dataset


def _config(**changes) -> TrainConfigFromValues:
    values = dict(
        n_e=4,
        n_s=2,
        n_p=256,
        n_0=64,
        n_b=64,
        n_a=2,
        n_n=8,
        n_h=1,
        n_lambda=2,
        lr_0=1e-3,
        lr_min=1e-5,
        T_s=0.02,
        boundaries=box(),
        domain_mode="sampled",
        x0_std=0.4,
        validation_fraction=0.3,
        seed=7,
    )
    values.update(changes)
    return TrainConfigFromValues(**values)


def _points(rng, n, B) -> CollocationSet:
    return CollocationSet(
        t_s=rng.uniform(-1, 1, B),
        x0=rng.uniform(-0.8, 0.8, (B, 2 * n)),
        u0=rng.uniform(-1, 1, (B, 2 * n)),
        delta=rng.uniform(-1, 1, (B, 2)),
        ic=None,
    )


def test_latin_hypercube_strata():
    config = _config(n_p=500)
    points = sample_collocation(config, 2, inflated_scaler(2, 0.02, box()), np.random.default_rng(3))
    for column in [points.t_s] + list(points.u0.T) + list(points.delta.T):
        strata = np.floor((column + 1.0) / 2.0 * 500).astype(int)
        assert sorted(strata) == list(range(500))


def test_initial_states_are_clipped_normal():
    config = _config(n_p=100000, n_0=20000, n_b=1000)
    points = sample_collocation(config, 2, inflated_scaler(2, 0.02, box()), np.random.default_rng(4))
    assert np.all(np.abs(points.x0) <= 1.0)
    assert abs(np.std(points.x0) - 0.4) < 0.02


def test_collocation_is_reproducible():
    config = _config()
    scaler = inflated_scaler(2, 0.02, box())
    a = sample_collocation(config, 2, scaler, np.random.default_rng(5))
    b = sample_collocation(config, 2, scaler, np.random.default_rng(5))
    for name in ("t_s", "x0", "u0", "delta"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_pinc_points_carry_initial_condition_rows():
    config = _config(n_a=0, n_0=40)
    points = sample_collocation(config, 2, inflated_scaler(2, 0.02, box()), np.random.default_rng(6))
    assert points.ic is not None and len(points.ic) == 40
    assert np.all(points.ic.t_s == -1.0)
    np.testing.assert_array_equal(points.ic.x0, points.x0[:40])
    assert sample_collocation(_config(), 2, inflated_scaler(2, 0.02, box()), np.random.default_rng(6)).ic is None


def test_nominal_domain_mode_fixes_the_domain():
    scaler = inflated_scaler(2, 0.02, box())
    points = sample_collocation(_config(domain_mode="nominal"), 2, scaler, np.random.default_rng(6))
    np.testing.assert_allclose(scaler.delta.unscale(points.delta), 0.0, atol=1e-15)


def _decay_solution() -> SurrogateModel:
    """A DD-PINN whose single ansatz term is the exact solution of x' = -x"""
    T_s = 0.02
    W = np.zeros((6, 8))
    W[0:2, 0:2] = np.eye(2)
    b = np.zeros(8)
    b[4:6] = np.pi / 2
    b[6:8] = T_s
    return SurrogateModel(
        n=1,
        head="ddpinn",
        n_a=1,
        T_s=T_s,
        boundaries=box(),
        scaler=inflated_scaler(1, T_s, box()),
        core=MLPWeights(weights=[W], biases=[b]),
    )


def test_exact_solution_has_no_physics_loss(rng):
    fp = LinearDynamics(-np.eye(2), np.zeros((2, 2)))
    value = physics_loss(_decay_solution(), fp, _points(rng, 1, 200), grad=False)
    assert 0.0 <= value.loss <= 1e-10
    assert value.excluded == 0


def test_zero_ddpinn_physics_loss_is_the_scaled_derivative(small_robot, rng):
    fp = FirstPrinciplesDynamics(small_robot)
    model = init_surrogate(2, head="ddpinn", n_a=2, n_n=8, n_h=1, T_s=0.02, boundaries=box(), rng=rng)
    model.core = zero_mlp(model.core.sizes())
    points = _points(rng, 2, 50)
    scaler = model.scaler
    direct = fp.evaluate(
        scaler.x.unscale(points.x0), scaler.u.unscale(points.u0), scaler.delta.unscale(points.delta), jacobian=False
    )
    assert np.all(direct.ok)
    expected = np.mean((model.T_s * scaler.x.factor * direct.derivative) ** 2)
    value = physics_loss(model, fp, points, grad=False)
    assert value.loss == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("head", ["pinc", "ddpinn"])
def test_physics_loss_gradient(head, rng):
    A = rng.normal(scale=20.0, size=(2, 2))
    B = rng.normal(scale=1e-3, size=(2, 2))
    fp = LinearDynamics(A, B)
    model = init_surrogate(1, head=head, n_a=1 if head == "ddpinn" else 0, n_n=6, n_h=2, T_s=0.02, boundaries=box(), rng=rng)
    points = _points(rng, 1, 16)
    value = physics_loss(model, fp, points, grad=True)
    assert value.loss >= 0 and value.grads is not None
    for param, grad in zip(model.core.parameters(), value.grads):
        for _ in range(5):
            index = tuple(rng.integers(0, s) for s in param.shape)
            fd = central_difference(lambda: physics_loss(model, fp, points, grad=False).loss, param, index)
            assert grad[index] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_rows_that_cannot_be_evaluated_are_excluded(rng, caplog):
    fp = LinearDynamics(-np.eye(2), np.zeros((2, 2)), fail_above=0.3)
    model = _decay_solution()
    points = _points(rng, 1, 100)
    points.x0[:10] = 0.95
    points.t_s[:10] = -1.0
    caplog.set_level(logging.WARNING)
    value = physics_loss(model, fp, points, grad=True)
    assert value.excluded >= 10
    assert math.isfinite(value.loss)
    assert all(np.all(np.isfinite(g)) for g in value.grads)
    assert any("excluded" in r.getMessage() for r in caplog.records)


def test_ic_loss(rng):
    points = _points(rng, 2, 30)
    ddpinn = init_surrogate(2, head="ddpinn", n_a=2, n_n=8, n_h=1, T_s=0.02, boundaries=box(), rng=rng)
    assert ic_loss(ddpinn, points, grad=True).loss == 0.0
    pinc = init_surrogate(2, head="pinc", n_a=0, n_n=8, n_h=1, T_s=0.02, boundaries=box(), rng=rng)
    pinc.core = zero_mlp(pinc.core.sizes())
    assert ic_loss(pinc, points, grad=False).loss == pytest.approx(np.mean(points.x0**2), rel=1e-12)
    bypass = init_surrogate(2, head="pinc", n_a=0, n_n=8, n_h=0, T_s=0.02, boundaries=box(), rng=rng)
    bypass.core.weights[0][:] = 0.0
    bypass.core.weights[0][1:5, :] = np.eye(4)
    bypass.core.biases[0][:] = 0.0
    assert ic_loss(bypass, points, grad=False).loss == 0.0


def test_data_loss(rng):
    model = init_surrogate(2, head="ddpinn", n_a=2, n_n=8, n_h=1, T_s=0.02, boundaries=box(), rng=rng)
    model.core = zero_mlp(model.core.sizes())
    points = _points(rng, 2, 20)
    exact = TransitionSet(x0=points.x0, u0=points.u0, delta=points.delta, x1=points.x0.copy())
    assert data_loss(model, exact, grad=True).loss == 0.0
    shifted = TransitionSet(x0=points.x0, u0=points.u0, delta=points.delta, x1=points.x0.copy())
    shifted.x1[:, 2] += 0.1
    assert data_loss(model, shifted, grad=False).loss == pytest.approx(0.1**2 / 4, rel=1e-9)
    assert data_loss(model, None, grad=False).loss == 0.0


def test_transitions_pair_samples_one_horizon_apart(small_robot, rng):
    dataset = sinusoid_dataset(small_robot, rng, duration=2.0, rate=100.0)
    scaler = inflated_scaler(2, 0.02, box())
    data = data_transitions([dataset], 0.02, scaler)
    assert len(data) == len(dataset) - 2
    np.testing.assert_allclose(scaler.x.unscale(data.x1[0]), dataset.states()[2], rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        data_transitions([dataset], 0.015, scaler)


def test_calibrated_weights():
    np.testing.assert_allclose(calibrate_weights(np.array([0.0, 4.0, 2.0]), head="pinc"), [0.0, 1.0, 2.0])
    np.testing.assert_allclose(calibrate_weights(np.array([3.0, 3.0, 3.0]), head="pinc"), [1.0, 1.0, 1.0])
    losses = np.array([0.5, 4.0, 2.0])
    np.testing.assert_allclose(
        calibrate_weights(7.0 * losses, head="pinc"), calibrate_weights(losses, head="pinc"), rtol=1e-15
    )
    np.testing.assert_allclose(calibrate_weights(np.array([0.0, 4.0, 0.0]), head="ddpinn"), [0.0, 1.0, 4.0])
    np.testing.assert_array_equal(calibrate_weights(np.zeros(3), head="pinc"), np.ones(3))


def test_adam_first_step_moves_by_the_learning_rate():
    p = np.array([1.0, -2.0, 3.0])
    Adam([p], lr=0.1).step([np.array([5.0, -0.01, 0.0])])
    np.testing.assert_allclose(p, [0.9, -1.9, 3.0], rtol=1e-6)


def test_adam_minimizes_a_quadratic():
    p = np.array([3.0, -4.0])
    adam = Adam([p], lr=0.05)
    for _ in range(2000):
        adam.step([2.0 * p])
    assert np.all(np.abs(p) < 1e-3)


def test_plateau_schedule():
    schedule = PlateauSchedule(lr=1.0, lr_min=0.3, patience=2)
    assert schedule.update(1, 1.0) == 1.0
    assert schedule.update(2, 1.0) == 1.0
    assert schedule.update(3, 1.0) == 0.5
    assert schedule.update(4, 0.5) == 0.5
    assert schedule.update(5, 0.6) == 0.5
    assert schedule.update(6, 0.6) == 0.3
    assert schedule.update(7, 0.6) == 0.3
    assert schedule.update(8, 0.6) == 0.3
    early = PlateauSchedule(lr=1.0, lr_min=0.1, patience=3)
    for epoch in range(1, 4):
        early.update(epoch, 1.0)
    assert early.lr == 1.0


def test_trainer_bookkeeping(small_robot, caplog, tmp_path):
    caplog.set_level(logging.INFO)
    trainer = PinnTrainer(_config(n_e=5), FirstPrinciplesDynamics(small_robot))
    result = trainer.run(5)
    assert [r.epoch for r in result.history] == list(range(5))
    np.testing.assert_array_equal(result.history[0].eta, np.ones(3))
    for record in result.history:
        assert record.L_t == pytest.approx(
            float(record.eta @ [record.L_d, record.L_p, record.L_0]), rel=1e-12
        )
        assert record.L_d == 0.0 and record.L_0 == 0.0
        assert record.eta[0] == 0.0 or record.epoch == 0
    sampled = [r.getMessage() for r in caplog.records if "collocation points" in r.getMessage()]
    assert [int(m.split()[1].rstrip(":")) for m in sampled] == [0, 2, 4]
    assert 1 <= result.best_epoch <= 4
    assert result.best_validation == min(r.L_v for r in result.history[1:])

    path = os.path.join(tmp_path, "history.csv")
    save_history(path, result.history)
    loaded = load_history(path)
    assert [r.L_v for r in loaded] == [r.L_v for r in result.history]


def test_trainer_resumes_and_is_reproducible(small_robot):
    fp = FirstPrinciplesDynamics(small_robot)
    config = _config(n_a=0, n_e=3)
    once = PinnTrainer(config, fp).run(3)
    resumed = PinnTrainer(config, fp)
    resumed.run(1)
    twice = resumed.run(3)
    assert [r.L_v for r in once.history] == [r.L_v for r in twice.history]
    x = predict_scaled(once.model, np.ones(1), np.zeros((1, 4)), np.zeros((1, 4)), np.zeros((1, 2)))
    y = predict_scaled(twice.model, np.ones(1), np.zeros((1, 4)), np.zeros((1, 4)), np.zeros((1, 2)))
    np.testing.assert_array_equal(x, y)


def test_trainer_needs_a_validation_batch(small_robot):
    with pytest.raises(ValueError):
        PinnTrainer(_config(n_p=64, n_b=64, n_0=10), FirstPrinciplesDynamics(small_robot))


def test_window_gradient_is_full_backpropagation(rng):
    w = init_gru(inflated_scaler(2, 0.02, box()), 0.02, hidden=6, n_h=2, rng=rng)
    h0 = rng.uniform(-0.5, 0.5, (1, 2, 6))
    x0 = rng.uniform(-0.5, 0.5, (1, 4))
    targets = rng.uniform(-0.5, 0.5, (5, 1, 4))
    inputs = rng.uniform(-1, 1, (5, 1, 4))
    result = window_loss(w, h0, x0, targets, inputs)
    for param, grad in zip(w.parameters(), result.grads):
        for _ in range(6):
            index = tuple(rng.integers(0, s) for s in param.shape)
            fd = central_difference(lambda: window_loss(w, h0, x0, targets, inputs).loss, param, index)
            assert grad[index] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def _gru_config(**changes) -> GRUTrainConfigFromValues:
    values = dict(
        n_e=3,
        n_b=25,
        n_n=8,
        n_h=2,
        dropout=0.1,
        n_lambda=2,
        lr_0=3e-3,
        lr_min=1e-5,
        validation_fraction=0.3,
        seed=0,
    )
    values.update(changes)
    return GRUTrainConfigFromValues(**values)


def test_gru_trainer(small_robot, rng):
    dataset = sinusoid_dataset(small_robot, rng, duration=10.0, rate=50.0)
    first = GRUTrainer(_gru_config(), [dataset], T_s=0.02, boundaries=box()).run(3)
    second = GRUTrainer(_gru_config(), [dataset], T_s=0.02, boundaries=box()).run(3)
    assert len(first.history) == 3
    assert all(math.isfinite(r.L_t) and math.isfinite(r.L_v) for r in first.history)
    assert [r.L_v for r in first.history] == [r.L_v for r in second.history]
    assert first.best_validation == min(r.L_v for r in first.history)


def test_synchronous_halving_promotions():
    scheduler = AshaScheduler(n_trials=4, grace_period=1, reduction_factor=2, max_epochs=4)
    assert scheduler.budgets == [1, 2, 4]
    jobs = [scheduler.next_job() for _ in range(4)]
    assert [j.trial_id for j in jobs] == [0, 1, 2, 3]
    assert scheduler.next_job() is None
    for trial_id, loss in enumerate([0.4, 0.1, 0.3, 0.2]):
        scheduler.report(trial_id, 0, loss)
    promoted = [scheduler.next_job(), scheduler.next_job()]
    assert [(j.trial_id, j.rung, j.epochs) for j in promoted] == [(1, 1, 2), (3, 1, 2)]
    assert scheduler.next_job() is None
    scheduler.report(1, 1, 0.05)
    scheduler.report(3, 1, 0.01)
    last = scheduler.next_job()
    assert (last.trial_id, last.rung, last.epochs) == (3, 2, 4)
    assert scheduler.next_job() is None
    scheduler.report(3, 2, 0.001)
    assert scheduler.best() == (3, 2, 0.001)
    assert scheduler.rung_sizes[0] == [4, 4]


def test_ties_promote_the_lower_trial_id():
    scheduler = AshaScheduler(n_trials=4, grace_period=1, reduction_factor=2, max_epochs=2)
    for _ in range(4):
        scheduler.next_job()
    for trial_id in (3, 2, 1, 0):
        scheduler.report(trial_id, 0, 1.0)
    assert [scheduler.next_job().trial_id for _ in range(2)] == [0, 1]


class _ToyTrial:
    def __init__(self, lr: float, calls, fail: bool = False) -> None:
        self.lr = lr
        self.calls = calls
        self.fail = fail

    def train_until(self, epochs: int) -> float:
        self.calls.append(epochs)
        if self.fail:
            raise RuntimeError("diverged")
        return (math.log10(self.lr) + 3.0) ** 2 + 1.0 / epochs


def test_asha_finds_the_toy_optimum(caplog):
    grid = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
    calls = {}

    def factory(trial_id, params):
        calls[trial_id] = []
        return _ToyTrial(params["lr_0"], calls[trial_id], fail=trial_id == 2)

    caplog.set_level(logging.INFO)
    report = asha_optimize(
        SearchSpace([Choice("lr_0", grid)]),
        AshaConfigFromValues(
            n_trials=12, grace_period=1, reduction_factor=2, max_epochs=8, max_concurrency=3, seed=0
        ),
        factory,
    )
    assert abs(grid.index(report.best_params["lr_0"]) - 2) <= 1
    assert report.budgets == [1, 2, 4, 8]
    assert len(report.trials) == 12
    assert report.trials[2].status == "failed"
    assert any(r.levelno == logging.ERROR for r in caplog.records)
    for epochs in calls.values():
        assert all(e in report.budgets for e in epochs)
        assert epochs == sorted(epochs)


def test_search_space_validation():
    with pytest.raises(EmptySearchSpaceError):
        SearchSpace([])
    with pytest.raises(EmptySearchSpaceError):
        SearchSpace([Choice("n_n", ())])
    space = SearchSpace([Range("n_h", 1, 3, integer=True), Range("lr_0", 1e-4, 1e-2, log=True)])
    rng = np.random.default_rng(0)
    for _ in range(50):
        params = space.sample(rng)
        assert params["n_h"] in (1, 2, 3)
        assert 1e-4 <= params["lr_0"] <= 1e-2


@pytest.mark.slow
@pytest.mark.parametrize("n_a", [0, 2])
def test_training_reduces_the_physics_loss(n_a):
    fp = LinearDynamics(np.array([[0.0, 1.0], [-400.0, -4.0]]), np.array([[0.0, 0.0], [1e-3, -1e-3]]))
    config = _config(n_a=n_a, n_e=40, n_s=40, n_p=2048, n_b=128, n_n=16, n_h=2, lr_0=3e-3, n_lambda=5)
    result = PinnTrainer(config, fp).run(40)
    assert result.history[-1].L_vp < 0.5 * result.history[0].L_vp
