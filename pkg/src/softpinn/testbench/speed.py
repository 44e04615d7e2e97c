"""Wall time of predicting one T_s horizon with the surrogates and with
the explicit integrators.

Every method predicts the same horizons: from each state of a shared oracle
trajectory under its held input. The clock only runs around the prediction.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from softpinn.config.config import IntegrationScheme, RolloutConfigFromValues
from softpinn.dynamics.model import FirstPrinciplesDynamics
from softpinn.dynamics.types import NOMINAL_DOMAIN, Domain
from softpinn.errors import (
    IntegrationDivergedError,
    NonFinitePredictionError,
    PlantDivergedError,
)
from softpinn.integrators import oracle_rollout, rollout
from softpinn.networks.surrogate import SurrogateModel, surrogate_predict
from softpinn.testbench.generalization import evaluation_inputs
from softpinn.util.csv_io import CsvTable, write_table

EULER_STEP = 20e-6
"""Largest Euler step the stiff model tolerates, s"""

RK4_STEP = 100e-6
"""Largest RK4 step the stiff model tolerates, s"""

WARMUP = 100
"""Untimed horizons before the measurement"""

Horizon = Callable[[np.ndarray, np.ndarray], np.ndarray]
"""(x, u) -> the state T_s later with u held"""


@dataclass
class BenchMethod:
    name: str
    n_calls: int
    """Model evaluations per horizon"""
    horizon: Horizon


def surrogate_method(name: str, model: SurrogateModel, delta: Domain = NOMINAL_DOMAIN) -> BenchMethod:
    T_s = model.T_s

    def horizon(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return surrogate_predict(model, T_s, x, u, delta)

    return BenchMethod(name=name, n_calls=1, horizon=horizon)


def integrator_method(
    fp: FirstPrinciplesDynamics,
    scheme: IntegrationScheme,
    substeps: int,
    /,
    *,
    delta: Domain = NOMINAL_DOMAIN,
    T_s: float = 0.02,
    name: Optional[str] = None,
) -> BenchMethod:
    config = RolloutConfigFromValues(T_s=T_s, substeps=substeps, scheme=scheme)

    def horizon(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return rollout(config, fp, x, u[None, :], delta)[1]

    return BenchMethod(name=name or scheme, n_calls=substeps, horizon=horizon)


def standard_methods(
    fp: FirstPrinciplesDynamics,
    /,
    *,
    ddpinn: Optional[SurrogateModel] = None,
    pinc: Optional[SurrogateModel] = None,
    delta: Domain = NOMINAL_DOMAIN,
    T_s: float = 0.02,
) -> List[BenchMethod]:
    """The available surrogates, then Euler and RK4 at their stability
    limits
    """
    methods = []
    if ddpinn is not None:
        methods.append(surrogate_method("ddpinn", ddpinn, delta))
    if pinc is not None:
        methods.append(surrogate_method("pinc", pinc, delta))
    methods.append(
        integrator_method(fp, "euler", int(round(T_s / EULER_STEP)), delta=delta, T_s=T_s)
    )
    methods.append(
        integrator_method(fp, "rk4", int(round(T_s / RK4_STEP)), delta=delta, T_s=T_s)
    )
    return methods


class BenchTrajectory(NamedTuple):
    states: np.ndarray
    """(K + 1, 2n) oracle states; horizon k starts at row k"""
    inputs: np.ndarray
    """(K, 2n) held pressures"""


def benchmark_trajectory(
    fp: FirstPrinciplesDynamics,
    rng: np.random.Generator,
    /,
    *,
    duration: float = 100.0,
    delta: Domain = NOMINAL_DOMAIN,
    T_s: float = 0.02,
) -> BenchTrajectory:
    inputs = evaluation_inputs(fp.n, rng, duration=duration, T_s=T_s)
    try:
        states = oracle_rollout(fp, np.zeros(2 * fp.n), inputs, delta, T_s=T_s)
    except IntegrationDivergedError as e:
        raise PlantDivergedError("benchmark trajectory diverged") from e
    return BenchTrajectory(states=states, inputs=inputs)


@dataclass
class TimingRow:
    method: str
    n_calls: int
    horizons: int
    """Horizons timed"""
    mean_ms: float
    max_ms: float
    min_ms: float
    diverged: int
    """Horizons the method failed on; not timed"""
    speedup: float = math.nan
    """Mean time of the baseline method over this method's mean time"""


def bench_speed(
    methods: Sequence[BenchMethod],
    trajectory: BenchTrajectory,
    /,
    *,
    warmup: int = WARMUP,
    baseline: str = "euler",
) -> List[TimingRow]:
    """Times every horizon of the trajectory for each method in turn, after
    `warmup` untimed horizons. Runs on the calling thread only.
    """
    states, inputs = trajectory
    K = inputs.shape[0]
    rows = []
    for method in methods:
        for i in range(warmup):
            try:
                method.horizon(states[i % K], inputs[i % K])
            except (IntegrationDivergedError, NonFinitePredictionError):
                pass

        times: List[int] = []
        diverged = 0
        for k in range(K):
            started = time.perf_counter_ns()
            try:
                method.horizon(states[k], inputs[k])
            except (IntegrationDivergedError, NonFinitePredictionError):
                diverged += 1
                continue
            times.append(time.perf_counter_ns() - started)

        if diverged:
            logging.warning(f"{method.name} diverged on {diverged} of {K} horizons")
        ms = np.array(times, dtype=np.float64) * 1e-6
        row = TimingRow(
            method=method.name,
            n_calls=method.n_calls,
            horizons=len(times),
            mean_ms=float(np.mean(ms)) if times else math.nan,
            max_ms=float(np.max(ms)) if times else math.nan,
            min_ms=float(np.min(ms)) if times else math.nan,
            diverged=diverged,
        )
        logging.info(
            f"{row.method}: {row.mean_ms:.4f} ms per horizon ({row.n_calls} calls, min {row.min_ms:.4f}, max {row.max_ms:.4f})"
        )
        rows.append(row)

    reference = next((r.mean_ms for r in rows if r.method == baseline), math.nan)
    for row in rows:
        row.speedup = reference / row.mean_ms
    return rows


def save_timing(path: str, rows: Sequence[TimingRow]) -> None:
    """One row per method; the method column indexes the `methods` tag"""
    columns = ["method", "n_calls", "horizons", "mean_ms", "max_ms", "min_ms", "diverged", "speedup"]
    data = [
        [float(i), r.n_calls, r.horizons, r.mean_ms, r.max_ms, r.min_ms, r.diverged, r.speedup]
        for i, r in enumerate(rows)
    ]
    write_table(
        path,
        CsvTable(
            kind="timing",
            columns=columns,
            data=np.array(data, dtype=np.float64).reshape(len(data), len(columns)),
            meta={"methods": ",".join(f"{r.method}={i}" for i, r in enumerate(rows))},
        ),
    )
