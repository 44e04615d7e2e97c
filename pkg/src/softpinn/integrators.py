"""Fixed-step explicit integration of state-space models with zero-order
hold inputs, and the fine-step oracle every accuracy figure is measured
against.
"""

from typing import Callable, List, Optional, Tuple

import numpy as np

from softpinn.config.config import (
    IntegrationScheme,
    RolloutConfig,
    RolloutConfigFromValues,
)
from softpinn.dynamics import kernels
from softpinn.dynamics.model import FirstPrinciplesDynamics
from softpinn.dynamics.types import Domain
from softpinn.errors import IntegrationDivergedError, SingularMassMatrixError
from softpinn.util.csv_io import CsvTable, read_table, write_table

StateDerivative = Callable[[np.ndarray, np.ndarray, Domain], np.ndarray]
"""f(x, u, delta) -> dx/dt"""

ORACLE_STEP = 5e-6
"""Step of the ground-truth RK4 rollout, s"""

_SCHEME_CODES = {"euler": kernels.SCHEME_EULER, "rk4": kernels.SCHEME_RK4}


def _checked(value: np.ndarray, step_index: int) -> np.ndarray:
    if not np.all(np.abs(value) <= kernels.DIVERGENCE_LIMIT):
        raise IntegrationDivergedError(
            f"state diverged during step {step_index}", step_index=step_index
        )
    return value


def step(
    scheme: IntegrationScheme,
    f: StateDerivative,
    x: np.ndarray,
    u: np.ndarray,
    delta: Domain,
    h_step: float,
) -> np.ndarray:
    """One explicit Euler or classical RK4 step of length h_step with u held"""
    if not h_step > 0:
        raise ValueError(f"step size must be positive, got {h_step}")
    x = np.asarray(x, dtype=np.float64)
    try:
        k1 = _checked(f(x, u, delta), 0)
        if scheme == "euler":
            return x + h_step * k1
        if scheme != "rk4":
            raise ValueError(f"unknown integration scheme {scheme!r}")
        k2 = _checked(f(x + 0.5 * h_step * k1, u, delta), 0)
        k3 = _checked(f(x + 0.5 * h_step * k2, u, delta), 0)
        k4 = _checked(f(x + h_step * k3, u, delta), 0)
    except SingularMassMatrixError as e:
        raise IntegrationDivergedError(str(e), step_index=0) from e
    return x + h_step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rollout(
    config: RolloutConfig,
    f: StateDerivative,
    x0: np.ndarray,
    u_traj: np.ndarray,
    delta: Domain,
) -> np.ndarray:
    """Integrates from x0 under each input of u_traj for T_s, returning the
    states at the T_s grid (one more row than u_traj)

    Raises:
        IntegrationDivergedError: with the index of the macro step that failed
    """
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    u_traj = np.ascontiguousarray(np.atleast_2d(u_traj), dtype=np.float64)
    if u_traj.shape[0] == 0:
        raise ValueError("input trajectory must not be empty")
    h = config.T_s / config.substeps

    if isinstance(f, FirstPrinciplesDynamics):
        traj = np.empty((u_traj.shape[0] + 1, x0.shape[0]))
        failed = kernels.fp_rollout(
            x0,
            u_traj,
            delta.m_e,
            delta.beta_g,
            h,
            config.substeps,
            _SCHEME_CODES[config.scheme],
            *f.model.kernel_params,
            traj,
        )
        if failed >= 0:
            raise IntegrationDivergedError(
                f"{config.scheme} rollout diverged during step {failed}",
                step_index=int(failed),
            )
        return traj

    traj = np.empty((u_traj.shape[0] + 1, x0.shape[0]))
    traj[0] = x0
    x = x0
    for k, u in enumerate(u_traj):
        for _ in range(config.substeps):
            try:
                x = step(config.scheme, f, x, u, delta, h)
            except IntegrationDivergedError as e:
                raise IntegrationDivergedError(str(e), step_index=k) from e
        traj[k + 1] = _checked(x, k)
    return traj


def oracle_config(T_s: float = 0.02, step_size: float = ORACLE_STEP) -> RolloutConfig:
    return RolloutConfigFromValues(
        T_s=T_s, substeps=max(1, int(round(T_s / step_size))), scheme="rk4"
    )


def oracle_rollout(
    f: StateDerivative,
    x0: np.ndarray,
    u_traj: np.ndarray,
    delta: Domain,
    /,
    *,
    T_s: float = 0.02,
    step_size: Optional[float] = None,
) -> np.ndarray:
    """Ground-truth rollout: classical RK4 at ORACLE_STEP (or the given step)"""
    return rollout(
        oracle_config(T_s, ORACLE_STEP if step_size is None else step_size),
        f,
        x0,
        u_traj,
        delta,
    )


def trajectory_columns(n: int) -> List[str]:
    return (
        ["t"]
        + [f"q{i + 1}" for i in range(n)]
        + [f"qd{i + 1}" for i in range(n)]
    )


def save_trajectory(path: str, traj: np.ndarray, T_s: float) -> None:
    """Writes states on the T_s grid with angles in degrees"""
    n = traj.shape[1] // 2
    t = np.arange(traj.shape[0]) * T_s
    write_table(
        path,
        CsvTable(
            kind="trajectory",
            columns=trajectory_columns(n),
            data=np.column_stack([t, np.degrees(traj)]),
            meta={"T_s": repr(T_s), "units": "deg"},
        ),
    )


def load_trajectory(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (t, states)"""
    table = read_table(path, kind="trajectory")
    if table.data.shape[0] > 1:
        spacing = np.diff(table.data[:, 0])
        if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=0.0):
            raise ValueError(f"{path} is not on a uniform grid")
    return table.data[:, 0], np.radians(table.data[:, 1:])
