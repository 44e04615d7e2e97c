"""The simulated test bench: the first-principles robot integrated by the
oracle at the logging rate, seen through quantizing encoders and pressure
sensors, and downsampled to the dataset rate.
"""

import logging
from typing import Optional

import numpy as np
from scipy import signal as sps

from softpinn.config.config import (
    ExcitationProtocol,
    SensorModel,
    SensorModelFromValues,
)
from softpinn.dynamics.robot_model import DEG, MBAR
from softpinn.dynamics.types import Domain
from softpinn.errors import IntegrationDivergedError, PlantDivergedError
from softpinn.identification.dataset import Dataset
from softpinn.integrators import StateDerivative, oracle_rollout
from softpinn.testbench.excitation import generate_excitation


def quantizing_sensors() -> SensorModelFromValues:
    """Encoder and pressure sensor resolutions of the bench, nothing else"""
    return SensorModelFromValues(
        encoder_quantum=0.09 * DEG,
        pressure_quantum=5 * MBAR,
        position_filter_hz=None,
        noise_std=0.0,
        pressure_lag=None,
    )


def bench_sensors() -> SensorModelFromValues:
    """The quantizing sensors plus the 1 Hz online angle filter and a valve
    lag between 10 and 80 ms
    """
    return SensorModelFromValues(
        encoder_quantum=0.09 * DEG,
        pressure_quantum=5 * MBAR,
        position_filter_hz=1.0,
        noise_std=0.0,
        pressure_lag=(0.01, 0.08),
    )


def quantize(values: np.ndarray, quantum: float) -> np.ndarray:
    return quantum * np.round(values / quantum)


def lag_pressures(p_d: np.ndarray, tau: np.ndarray, dt: float) -> np.ndarray:
    """First-order response of every bellows to its desired pressure,
    starting in steady state at the first sample
    """
    a = np.exp(-dt / np.asarray(tau, dtype=np.float64))
    out = np.empty_like(p_d)
    for j in range(p_d.shape[1]):
        b_j = np.array([0.0, 1.0 - a[j]])
        a_j = np.array([1.0, -a[j]])
        zi = sps.lfilter_zi(b_j, a_j) * p_d[0, j]
        out[:, j], _ = sps.lfilter(b_j, a_j, p_d[:, j], zi=zi)
    return out


def measure_angles(
    q: np.ndarray,
    sensors: SensorModel,
    rate: float,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    """Noise, then encoder quantization, then the causal online filter"""
    if sensors.noise_std > 0:
        if rng is None:
            raise ValueError("angle noise needs a random generator")
        q = q + rng.normal(0.0, sensors.noise_std, q.shape)
    q = quantize(q, sensors.encoder_quantum)
    if sensors.position_filter_hz is not None:
        b, a = sps.butter(1, sensors.position_filter_hz, btype="low", fs=rate)
        zi = sps.lfilter_zi(b, a)[:, None] * q[0][None, :]
        q, _ = sps.lfilter(b, a, q, axis=0, zi=zi)
    return q


def backward_difference(values: np.ndarray, rate: float) -> np.ndarray:
    """Rate of change between consecutive rows; zero in the first row"""
    return np.diff(values, axis=0, prepend=values[:1]) * rate


def simulate_plant(
    fp: StateDerivative,
    p_d: np.ndarray,
    delta: Domain,
    /,
    *,
    log_rate: int,
    output_rate: int,
    sensors: Optional[SensorModel] = None,
    rng: Optional[np.random.Generator] = None,
    x0: Optional[np.ndarray] = None,
) -> Dataset:
    """Applies the desired pressures p_d (K, 2n), one row per log period, to
    the robot resting at x0 (the origin by default) and returns every
    log_rate / output_rate-th sample. Without sensors the dataset holds the
    exact oracle states and pressures; with sensors the angles are measured,
    the velocities are backward differences of the measured angles at the
    output rate and the pressures are quantized.

    Raises:
        PlantDivergedError: the oracle integration diverged
    """
    if log_rate % output_rate != 0:
        raise ValueError(f"output rate {output_rate} must divide log rate {log_rate}")
    p_d = np.ascontiguousarray(p_d, dtype=np.float64)
    if p_d.ndim != 2 or p_d.shape[1] % 2 != 0 or p_d.shape[0] == 0:
        raise ValueError(f"desired pressures must have shape (K, 2n), got {p_d.shape}")
    K = p_d.shape[0]
    n = p_d.shape[1] // 2
    dt = 1.0 / log_rate
    stride = log_rate // output_rate
    x0 = np.zeros(2 * n) if x0 is None else np.asarray(x0, dtype=np.float64)

    p = p_d
    if sensors is not None and sensors.pressure_lag is not None:
        if rng is None:
            raise ValueError("a random pressure lag needs a random generator")
        tau = rng.uniform(*sensors.pressure_lag, 2 * n)
        p = lag_pressures(p_d, tau, dt)

    try:
        states = oracle_rollout(fp, x0, p, delta, T_s=dt)[:K]
    except IntegrationDivergedError as e:
        raise PlantDivergedError(
            f"plant diverged at t={e.step_index * dt:.3f} s in {delta.describe()}"
        ) from e

    rows = slice(0, K, stride)
    q = states[:, :n]
    if sensors is None:
        q_out = q[rows]
        qd_out = states[rows, n:]
        p_out = p[rows]
    else:
        q_out = measure_angles(q, sensors, log_rate, rng)[rows]
        qd_out = backward_difference(q_out, output_rate)
        p_out = quantize(p[rows], sensors.pressure_quantum)

    logging.debug(
        f"simulated {K * dt:.1f} s of plant motion in {delta.describe()}"
    )
    return Dataset(
        rate=float(output_rate),
        t=np.arange(q_out.shape[0]) / output_rate,
        q=q_out,
        qd=qd_out,
        p=p_out,
        p_d=p_d[rows],
        domain=delta,
    )


def record_excitation(
    fp: StateDerivative,
    protocol: ExcitationProtocol,
    delta: Domain,
    rng: np.random.Generator,
    /,
    *,
    n: int,
    sensors: Optional[SensorModel] = None,
    x0: Optional[np.ndarray] = None,
) -> Dataset:
    """A random excitation of the protocol recorded on the simulated bench"""
    p_d = generate_excitation(protocol, n, rng)
    dataset = simulate_plant(
        fp,
        p_d,
        delta,
        log_rate=protocol.log_rate,
        output_rate=protocol.output_rate,
        sensors=sensors,
        rng=rng,
        x0=x0,
    )
    logging.info(
        f"recorded {protocol.duration:g} s of excitation in {delta.describe()} ({len(dataset)} samples)"
    )
    return dataset
