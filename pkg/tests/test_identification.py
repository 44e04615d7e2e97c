import dataclasses

import numpy as np
import pytest

from softpinn.dynamics import DEG, Domain, dynamics_terms
from softpinn.errors import DatasetTooShortError, RankDeficiencyError
from softpinn.identification.dataset import Dataset, load_dataset, save_dataset
from softpinn.identification.least_squares import solve_least_squares
from softpinn.identification.partition import partition
from softpinn.identification.result_file import load_ident_result, save_ident_result
from softpinn.identification.signal import estimate_acceleration, recorded_motion
from softpinn.identification.three_step import (
    IdentResult,
    TorqueSamples,
    identify_all,
    identify_contact,
    identify_friction,
    identify_stiffness,
    refit_stiffness_friction,
    torque_samples,
)
from softpinn.util.csv_io import read_table
from tests.helpers import joint_torques, pressures_for, sinusoid_dataset


def _dataset_from_angles(q: np.ndarray, rate: float = 50.0) -> Dataset:
    rows, n = q.shape
    return Dataset(
        rate=rate,
        t=np.arange(rows) / rate,
        q=q,
        qd=np.zeros((rows, n)),
        p=np.zeros((rows, 2 * n)),
        p_d=np.zeros((rows, 2 * n)),
        domain=Domain(0.0, 0.0),
    )


def _samples(model, Q, QD, QDD, delta=Domain(0.05, 30 * DEG)) -> TorqueSamples:
    D = np.tile(delta.as_array(), (Q.shape[0], 1))
    terms = dynamics_terms(Q, QD, QDD, D, model)
    return TorqueSamples(
        q=Q,
        qd=QD,
        qdd=QDD,
        tau=joint_torques(model, Q, QD, QDD, delta),
        gravity=terms.gravity,
        inertial=terms.inertial,
        coriolis=terms.coriolis,
    )


def test_constant_angles_have_no_acceleration():
    q = np.tile([0.1, -0.2], (200, 1))
    motion = estimate_acceleration(_dataset_from_angles(q))
    np.testing.assert_allclose(motion.qdd, 0.0, atol=1e-9)
    np.testing.assert_allclose(motion.qd, 0.0, atol=1e-9)


def test_slow_sinusoid_acceleration_amplitude():
    rate = 50.0
    t = np.arange(1000) / rate
    w = 2 * np.pi * 0.5
    q = 0.2 * np.sin(w * t)[:, None]
    motion = estimate_acceleration(_dataset_from_angles(q, rate))
    expected = -0.2 * w**2 * np.sin(w * t[motion.rows])
    assert np.max(np.abs(motion.qdd[:, 0] - expected)) < 0.02 * 0.2 * w**2


def test_quadratic_acceleration_in_the_interior():
    rate = 50.0
    t = np.arange(500) / rate
    q = (0.5 * 3.0 * t**2)[:, None]
    motion = estimate_acceleration(_dataset_from_angles(q, rate))
    np.testing.assert_allclose(motion.qdd[:, 0], 3.0, rtol=0.01)
    assert motion.q.shape == motion.qd.shape == motion.qdd.shape


def test_recorded_motion_differentiates_the_logged_velocity():
    t = np.arange(50) / 50.0
    q = np.column_stack([t**2, -(t**2)])
    dataset = _dataset_from_angles(q)
    dataset = dataclasses.replace(dataset, qd=np.column_stack([2 * t, -2 * t]))
    motion = recorded_motion(dataset)
    assert motion.rows == slice(1, 49)
    np.testing.assert_array_equal(motion.q, q[1:-1])
    np.testing.assert_allclose(motion.qdd, np.tile([2.0, -2.0], (48, 1)), rtol=1e-9)


def test_short_dataset_is_rejected():
    with pytest.raises(DatasetTooShortError):
        estimate_acceleration(_dataset_from_angles(np.zeros((30, 2))))


def test_partition_static_pose_is_all_static(robot):
    q = np.full((50, robot.n), 5 * DEG)
    parts = partition(_dataset_from_angles(q), robot)
    assert parts.static.all()
    assert not parts.dynamic.any() and not parts.contact.any()
    np.testing.assert_allclose(parts.fractions(), [[1.0, 0.0, 0.0]] * robot.n)


def test_partition_boundary_takes_precedence(robot):
    dataset = _dataset_from_angles(np.zeros((3, robot.n)))
    dataset.q[1, 2] = 15 * DEG
    dataset.qd[1, 2] = 5 * DEG
    dataset.qd[2, 0] = 5 * DEG
    parts = partition(dataset, robot)
    assert parts.contact[1, 2] and not parts.dynamic[1, 2]
    assert parts.dynamic[2, 0]


def test_partition_is_disjoint_cover(robot, rng):
    dataset = _dataset_from_angles(rng.uniform(-20, 20, (500, robot.n)) * DEG)
    dataset.qd[:] = rng.uniform(-3, 3, (500, robot.n)) * DEG
    parts = partition(dataset, robot)
    total = parts.static.astype(int) + parts.dynamic.astype(int) + parts.contact.astype(int)
    np.testing.assert_array_equal(total, 1)
    np.testing.assert_allclose(parts.fractions().sum(axis=1), 1.0)


def test_least_squares_reports_dependent_columns():
    Q = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [3.0, 6.0, 0.0]])
    solution = solve_least_squares(Q, np.array([1.0, 2.0, 3.0]))
    assert len(solution.deficient) == 2
    assert 2 in solution.deficient
    assert solution.residual_rms < 1e-12


def _static_samples(model, rng, rows=200):
    Q = rng.uniform(-9, 9, (rows, model.n)) * DEG
    zeros = np.zeros_like(Q)
    return _samples(model, Q, zeros, zeros), np.ones_like(Q, dtype=bool)


def test_stiffness_recovered_from_static_rows(robot, rng):
    samples, mask = _static_samples(robot, rng)
    fit = identify_stiffness(samples, mask, robot)
    np.testing.assert_allclose(fit.values, robot.k_s, rtol=0.005)


def test_stiffness_is_least_squares_optimal(robot, rng):
    samples, mask = _static_samples(robot, rng)
    samples = dataclasses.replace(
        samples, tau=samples.tau + rng.normal(0, 0.01, samples.tau.shape)
    )
    fit = identify_stiffness(samples, mask, robot)

    def rms(k_s):
        residual = samples.tau - samples.gravity - k_s * samples.q
        return np.sqrt(np.mean(residual**2))

    best = rms(fit.values)
    for i in range(robot.n):
        for sign in (-1, 1):
            perturbed = fit.values.copy()
            perturbed[i] *= 1 + sign * 0.01
            assert best <= rms(perturbed)


def test_stiffness_unchanged_by_duplicated_rows(robot, rng):
    samples, mask = _static_samples(robot, rng, rows=60)
    doubled = TorqueSamples(
        **{
            f.name: np.concatenate([getattr(samples, f.name)] * 2)
            for f in dataclasses.fields(samples)
        }
    )
    once = identify_stiffness(samples, mask, robot).values
    twice = identify_stiffness(doubled, np.concatenate([mask, mask]), robot).values
    np.testing.assert_allclose(once, twice, rtol=1e-12)


def test_stiffness_needs_deflection(robot):
    zeros = np.zeros((40, robot.n))
    samples = _samples(robot, zeros, zeros, zeros)
    with pytest.raises(RankDeficiencyError) as info:
        identify_stiffness(samples, np.ones_like(zeros, dtype=bool), robot)
    assert info.value.step == "stiffness"
    assert info.value.joints == list(range(robot.n))


def _moving_samples(model, rng, rows=400):
    Q = rng.uniform(-9, 9, (rows, model.n)) * DEG
    QD = rng.choice([-1, 1], (rows, model.n)) * rng.uniform(1.5, 40, (rows, model.n)) * DEG
    QDD = rng.uniform(-200, 200, (rows, model.n)) * DEG
    return _samples(model, Q, QD, QDD), np.ones_like(Q, dtype=bool)


def test_friction_recovered_from_moving_rows(robot, rng):
    samples, mask = _moving_samples(robot, rng)
    fit = identify_friction(samples, mask, robot, robot.k_s)
    np.testing.assert_allclose(fit.k_v, robot.k_v, rtol=0.02)
    np.testing.assert_allclose(fit.k_C, robot.k_C, rtol=0.02)


def test_friction_needs_varied_velocity(robot, rng):
    samples, mask = _moving_samples(robot, rng)
    qd = samples.qd.copy()
    qd[:, 1] = 10 * DEG
    rebuilt = _samples(robot, samples.q, qd, samples.qdd)
    with pytest.raises(RankDeficiencyError) as info:
        identify_friction(rebuilt, mask, robot, robot.k_s)
    assert info.value.joints == [1]


def test_friction_estimates_tighten_with_more_data(small_robot):
    def spread(rows):
        estimates = []
        for seed in range(30):
            seeded = np.random.default_rng(seed)
            samples, mask = _moving_samples(small_robot, seeded, rows)
            noisy = dataclasses.replace(
                samples, tau=samples.tau + seeded.normal(0, 0.02, samples.tau.shape)
            )
            estimates.append(identify_friction(noisy, mask, small_robot, small_robot.k_s).k_v)
        return np.var(estimates, axis=0)

    assert np.all(spread(400) < spread(100))


def test_joint_refit_recovers_stiffness_and_friction(robot, rng):
    moving, _ = _moving_samples(robot, rng, rows=300)
    creeping = _samples(
        robot,
        rng.uniform(-9, 9, (200, robot.n)) * DEG,
        rng.uniform(-0.3, 0.3, (200, robot.n)) * DEG,
        np.zeros((200, robot.n)),
    )
    samples = TorqueSamples(
        **{
            f.name: np.concatenate([getattr(moving, f.name), getattr(creeping, f.name)])
            for f in dataclasses.fields(moving)
        }
    )
    mask = np.ones_like(samples.q, dtype=bool)
    stiffness, friction = refit_stiffness_friction(samples, mask, robot)
    np.testing.assert_allclose(stiffness.values, robot.k_s, rtol=1e-6)
    np.testing.assert_allclose(friction.k_v, robot.k_v, rtol=1e-6)
    np.testing.assert_allclose(friction.k_C, robot.k_C, rtol=1e-6)


def _contact_samples(model, rng, rows=300, moving=True):
    Q = rng.choice([-1, 1], (rows, model.n)) * rng.uniform(10.5, 25, (rows, model.n)) * DEG
    QD = rng.uniform(-30, 30, (rows, model.n)) * DEG if moving else np.zeros_like(Q)
    QDD = rng.uniform(-100, 100, (rows, model.n)) * DEG
    return _samples(model, Q, QD, QDD), np.ones_like(Q, dtype=bool)


def test_contact_recovered_beyond_the_boundary(robot, rng):
    samples, mask = _contact_samples(robot, rng)
    fit = identify_contact(samples, mask, robot, robot.k_s, robot.k_v, robot.k_C)
    assert fit.k_bs == pytest.approx(robot.k_bs, rel=0.02)
    assert fit.k_bd == pytest.approx(robot.k_bd, rel=0.02)
    assert fit.unidentified == []


def test_contact_needs_boundary_rows(robot, rng):
    samples, mask = _static_samples(robot, rng)
    with pytest.raises(RankDeficiencyError) as info:
        identify_contact(samples, mask, robot, robot.k_s, robot.k_v, robot.k_C)
    assert info.value.step == "contact"


def test_contact_damping_needs_motion(robot, rng):
    samples, mask = _contact_samples(robot, rng, moving=False)
    fit = identify_contact(samples, mask, robot, robot.k_s, robot.k_v, robot.k_C)
    assert fit.k_bs == pytest.approx(robot.k_bs, rel=0.02)
    assert fit.unidentified == ["k_bd"]
    assert fit.k_bd == robot.k_bd


def test_identify_all_recovers_parameters(robot, rng):
    dataset = sinusoid_dataset(robot, rng, delta=Domain(0.1, 45 * DEG))
    result = identify_all(
        dataset,
        robot.with_parameters(
            k_s=robot.k_s * 1.3,
            k_v=robot.k_v * 0.5,
            k_C=robot.k_C * 2,
            k_bs=robot.k_bs * 3,
            k_bd=robot.k_bd * 0.2,
        ),
        refine=True,
    )
    np.testing.assert_allclose(result.k_s, robot.k_s, rtol=0.02)
    np.testing.assert_allclose(result.k_v, robot.k_v, rtol=0.02)
    np.testing.assert_allclose(result.k_C, robot.k_C, rtol=0.02)
    assert result.k_bs == pytest.approx(robot.k_bs, rel=0.02)
    assert result.k_bd == pytest.approx(robot.k_bd, rel=0.02)
    assert result.subset_fractions.shape == (robot.n, 3)
    assert np.all(result.subset_fractions.sum(axis=1) <= 1 + 1e-12)
    assert set(result.residual_rms) == {"stiffness", "friction", "refit", "contact"}
    assert result.refined


def test_identify_all_returns_the_sequential_steps_by_default(robot, rng):
    dataset = sinusoid_dataset(robot, rng, delta=Domain(0.1, 45 * DEG))
    result = identify_all(dataset, robot)
    assert not result.refined
    assert set(result.residual_rms) == {"stiffness", "friction", "contact"}

    samples = torque_samples(dataset, robot)
    static = partition(samples, robot).static
    np.testing.assert_allclose(
        result.k_s, identify_stiffness(samples, static, robot).values, rtol=1e-12
    )

    def rms(k_s):
        residual = (samples.tau - samples.gravity - k_s * samples.q)[static]
        return np.sqrt(np.mean(residual**2))

    best = rms(result.k_s)
    for i in range(robot.n):
        for sign in (-1, 1):
            perturbed = result.k_s.copy()
            perturbed[i] *= 1 + sign * 0.01
            assert best <= rms(perturbed)


def test_identify_all_rejects_empty_dataset(robot):
    empty = Dataset(
        rate=50.0,
        t=np.empty(0),
        q=np.empty((0, robot.n)),
        qd=np.empty((0, robot.n)),
        p=np.empty((0, 2 * robot.n)),
        p_d=np.empty((0, 2 * robot.n)),
        domain=Domain(0.0, 0.0),
    )
    with pytest.raises(DatasetTooShortError):
        identify_all(empty, robot)


def test_identify_all_reports_every_failed_step(small_robot):
    rows = 400
    t = np.arange(rows) / 50.0
    q = np.zeros((rows, small_robot.n))
    q[:, 0] = 2 * DEG * np.sin(2 * np.pi * 0.2 * t)
    qd = np.gradient(q, t, axis=0)
    p = pressures_for(small_robot, joint_torques(small_robot, q, qd, np.zeros_like(q), Domain(0.0, 0.0)))
    dataset = Dataset(rate=50.0, t=t, q=q, qd=qd, p=p, p_d=p, domain=Domain(0.0, 0.0))
    with pytest.raises(Exception) as info:
        identify_all(dataset, small_robot)
    failures = getattr(info.value, "exceptions", None)
    if failures is None:
        failures = []
        cause = info.value.__cause__
        while cause is not None:
            failures.append(cause)
            cause = cause.__cause__
    steps = {e.step for e in failures if isinstance(e, RankDeficiencyError)}
    assert "stiffness" in steps and "contact" in steps


def test_dataset_file_round_trip(tmp_path, small_robot, rng):
    dataset = sinusoid_dataset(small_robot, rng, duration=2.0, delta=Domain(0.2, 90 * DEG))
    path = str(tmp_path / "data.csv")
    save_dataset(path, dataset)
    loaded = load_dataset(path)
    np.testing.assert_array_equal(loaded.t, dataset.t)
    np.testing.assert_allclose(loaded.q, dataset.q, rtol=1e-15, atol=1e-18)
    np.testing.assert_array_equal(loaded.p, dataset.p)
    assert loaded.domain.m_e == 0.2
    assert loaded.domain.beta_g == pytest.approx(np.pi / 2, rel=1e-15)

    table = read_table(path, kind="dataset")
    np.testing.assert_array_equal(table.data[:, 1:3], np.degrees(dataset.q))


def test_ident_result_file_round_trip(tmp_path, robot):
    result = IdentResult(
        k_s=robot.k_s,
        k_v=robot.k_v,
        k_C=robot.k_C,
        k_bs=robot.k_bs,
        k_bd=robot.k_bd,
        subset_fractions=np.full((robot.n, 3), 1 / 3),
        residual_rms={"stiffness": 0.01},
        unidentified=[],
        refined=True,
    )
    path = str(tmp_path / "ident.json")
    save_ident_result(result, path)
    loaded = load_ident_result(path)
    np.testing.assert_allclose(loaded.k_s, robot.k_s, rtol=1e-12)
    assert loaded.k_bd == pytest.approx(robot.k_bd, rel=1e-12)
    assert loaded.refined
    model = loaded.apply(robot)
    np.testing.assert_allclose(model.k_C, robot.k_C)
