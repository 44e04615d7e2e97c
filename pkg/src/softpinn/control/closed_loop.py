"""Simulated tracking experiments: a controller commanding the
first-principles plant, which is integrated at the oracle step between
controller updates and logged at a fixed rate.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Protocol, Sequence

import numpy as np

from softpinn.config.config import RolloutConfigFromValues
from softpinn.control.reference import Reference
from softpinn.dynamics.model import FirstPrinciplesDynamics
from softpinn.dynamics.types import Domain
from softpinn.errors import (
    ControllerError,
    IntegrationDivergedError,
    NonFinitePredictionError,
    PlantDivergedError,
)
from softpinn.integrators import ORACLE_STEP, rollout
from softpinn.util.csv_io import CsvTable, write_table

LOG_PERIOD = 1e-3
"""Spacing of the closed-loop log and granularity of controller updates, s"""


class ControlUpdate(NamedTuple):
    u: np.ndarray
    """(2n,) commanded pressures, Pa"""
    hold: float
    """Time until the controller is asked again, s"""
    solve_time: float
    """Wall time the update took, s"""
    warm_start: bool
    """The controller fell back to its previous output"""


class Controller(Protocol):
    @property
    def name(self) -> str:
        """Short label used in logs and tables"""

    def reset(self) -> None:
        """Forgets all internal state before a new experiment"""

    def update(self, t: float, x: np.ndarray, reference: Reference) -> ControlUpdate:
        """The command for the measured state x at time t"""


@dataclass
class ClosedLoopLog:
    controller: str
    domain: Domain
    t: np.ndarray
    """(K,) log times, s"""
    x: np.ndarray
    """(K, 2n) plant states"""
    x_d: np.ndarray
    """(K, 2n) desired states"""
    u: np.ndarray
    """(K, 2n) commanded pressures held at each log time"""
    solve_ms: np.ndarray
    """(K,) wall time of the most recent controller update, ms"""

    @property
    def n(self) -> int:
        return self.x.shape[1] // 2


@dataclass
class ClosedLoopMetrics:
    controller: str
    domain: Domain
    mae_per_joint: np.ndarray
    """(n,) mean absolute position error per joint, rad"""
    mae: float
    """Mean absolute position error averaged over the joints, rad"""
    update_rate: float
    """Controller updates per second"""
    mean_solve_ms: float
    warm_starts: int
    """Updates that returned the previous command unchanged"""


class ClosedLoopResult(NamedTuple):
    log: ClosedLoopLog
    metrics: ClosedLoopMetrics


def mean_solve_ms(solve_times: Sequence[float]) -> float:
    """Mean controller solve time in ms; 0 when the controller was never asked"""
    if not solve_times:
        return 0.0
    return 1e3 * float(np.mean(solve_times))


def closed_loop(
    fp: FirstPrinciplesDynamics,
    controller: Controller,
    reference: Reference,
    delta: Domain,
    /,
    *,
    duration: Optional[float] = None,
    x0: Optional[np.ndarray] = None,
    plant_step: float = ORACLE_STEP,
    log_period: float = LOG_PERIOD,
) -> ClosedLoopResult:
    """Runs the controller against the plant from x0 (rest at the origin by
    default) for the given duration (the whole reference by default)

    Raises:
        PlantDivergedError: the plant integration diverged
        ControllerError: the controller could not produce a command
    """
    n = fp.n
    if duration is None:
        duration = reference.duration
    steps = int(round(duration / log_period))
    if steps < 1:
        raise ValueError(f"duration {duration} is shorter than one log period")
    substeps = max(1, int(round(log_period / plant_step)))
    plant = RolloutConfigFromValues(T_s=log_period, substeps=substeps, scheme="rk4")

    t = np.arange(steps + 1) * log_period
    X = np.empty((steps + 1, 2 * n))
    U = np.empty((steps + 1, 2 * n))
    solve_ms = np.empty(steps + 1)
    x = np.zeros(2 * n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    controller.reset()

    next_update = 0
    updates = 0
    warm_starts = 0
    solve_times: List[float] = []
    u = np.zeros(2 * n)
    last_ms = 0.0
    for i in range(steps + 1):
        if i >= next_update:
            try:
                update = controller.update(float(t[i]), x, reference)
            except (NonFinitePredictionError, ValueError) as e:
                raise ControllerError(
                    f"{controller.name} failed at t={t[i]:.3f} s: {e}"
                ) from e
            u = update.u
            updates += 1
            warm_starts += int(update.warm_start)
            solve_times.append(update.solve_time)
            last_ms = 1e3 * update.solve_time
            next_update = i + max(1, math.ceil(update.hold / log_period - 1e-9))
        X[i] = x
        U[i] = u
        solve_ms[i] = last_ms
        if i < steps:
            try:
                x = rollout(plant, fp, x, u[None, :], delta)[1]
            except IntegrationDivergedError as e:
                raise PlantDivergedError(
                    f"plant diverged at t={t[i]:.3f} s under {controller.name}"
                ) from e

    x_d = reference.at(t)
    log = ClosedLoopLog(
        controller=controller.name, domain=delta, t=t, x=X, x_d=x_d, u=U, solve_ms=solve_ms
    )
    mae_per_joint = np.mean(np.abs(X[:, :n] - x_d[:, :n]), axis=0)
    metrics = ClosedLoopMetrics(
        controller=controller.name,
        domain=delta,
        mae_per_joint=mae_per_joint,
        mae=float(np.mean(mae_per_joint)),
        update_rate=updates / duration,
        mean_solve_ms=mean_solve_ms(solve_times),
        warm_starts=warm_starts,
    )
    logging.info(
        f"{controller.name} at {delta.describe()}: mean error {math.degrees(metrics.mae):.3f} deg at {metrics.update_rate:.1f} Hz"
    )
    return ClosedLoopResult(log=log, metrics=metrics)


def save_closed_loop_log(path: str, log: ClosedLoopLog) -> None:
    """Columns t, q*, q_d*, u*, solve_ms with angles in degrees"""
    n = log.n
    columns = (
        ["t"]
        + [f"q{i + 1}" for i in range(n)]
        + [f"q_d{i + 1}" for i in range(n)]
        + [f"u{i + 1}{side}" for i in range(n) for side in (1, 2)]
        + ["solve_ms"]
    )
    write_table(
        path,
        CsvTable(
            kind="closed_loop",
            columns=columns,
            data=np.column_stack(
                [
                    log.t,
                    np.degrees(log.x[:, :n]),
                    np.degrees(log.x_d[:, :n]),
                    log.u,
                    log.solve_ms,
                ]
            ),
            meta={
                "controller": log.controller,
                "me": repr(float(log.domain.m_e)),
                "beta_deg": repr(math.degrees(log.domain.beta_g)),
                "angles": "deg",
            },
        ),
    )


CONTROLLER_KINDS = {"pi": 0.0, "mpc": 1.0}
"""Numeric codes of the controller column of the campaign table"""


def tracking_campaign(
    fp: FirstPrinciplesDynamics,
    controllers: Callable[[Domain], Sequence[Controller]],
    reference: Reference,
    domains: Sequence[Domain],
    /,
    *,
    duration: Optional[float] = None,
) -> List[ClosedLoopMetrics]:
    """Every controller `controllers(delta)` returns, on the same reference,
    in every domain
    """
    results = []
    for delta in domains:
        for controller in controllers(delta):
            results.append(closed_loop(fp, controller, reference, delta, duration=duration).metrics)
    return results


def save_campaign(path: str, metrics: Sequence[ClosedLoopMetrics]) -> None:
    """One row per experiment: me, beta_deg, controller (0 PI, 1 MPC),
    mean error in degrees, per-joint errors, update rate, mean solve time
    """
    n = metrics[0].mae_per_joint.shape[0] if metrics else 0
    columns = (
        ["me", "beta_deg", "controller", "e_q_deg"]
        + [f"e_q{i + 1}_deg" for i in range(n)]
        + ["update_hz", "solve_ms", "warm_starts"]
    )
    rows = [
        [
            m.domain.m_e,
            math.degrees(m.domain.beta_g),
            CONTROLLER_KINDS.get(m.controller, -1.0),
            math.degrees(m.mae),
        ]
        + list(np.degrees(m.mae_per_joint))
        + [m.update_rate, m.mean_solve_ms, float(m.warm_starts)]
        for m in metrics
    ]
    write_table(
        path,
        CsvTable(
            kind="tracking_campaign",
            columns=columns,
            data=np.array(rows, dtype=np.float64).reshape(len(rows), len(columns)),
            meta={"controllers": "pi=0,mpc=1"},
        ),
    )
