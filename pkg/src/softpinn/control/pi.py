"""Decentralized PI joint control with antagonistic pressure mapping.

Each joint's controller outputs a pressure difference which is split
symmetrically around the mean pressure p_max / 2 onto its two bellows. The
integrator of a joint is frozen while either of its bellows saturates.
"""

import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Optional, Type

import numpy as np

from softpinn.config.config import PIConfig, PIConfigFromValues
from softpinn.control.closed_loop import ControlUpdate, Controller
from softpinn.control.reference import Reference
from softpinn.dynamics.robot_model import DEG, MBAR

PUBLISHED_Q_P = (40.0, 60.0, 110.0, 110.0, 100.0)
"""Proportional gains of the five-joint robot, mbar/deg"""

PUBLISHED_Q_I = (40.0, 40.0, 80.0, 60.0, 110.0)
"""Integral gains of the five-joint robot, mbar/(deg·s)"""


def published_pi_config(n: int, p_max: float, period: float = 1e-3) -> PIConfigFromValues:
    """The published gains for the first n joints (the last gain repeats for
    longer chains), converted to Pa/rad; the integrator clamp is chosen so
    the integral term alone spans at most the full pressure range
    """
    Q_P = np.array([PUBLISHED_Q_P[min(i, 4)] for i in range(n)]) * MBAR / DEG
    Q_I = np.array([PUBLISHED_Q_I[min(i, 4)] for i in range(n)]) * MBAR / DEG
    return PIConfigFromValues(
        Q_P=Q_P,
        Q_I=Q_I,
        integrator_clamp=saturation_clamp(Q_I, p_max),
        p_max=p_max,
        period=period,
    )


def saturation_clamp(Q_I: np.ndarray, p_max: float) -> np.ndarray:
    """Integrated error at which the integral term reaches p_max"""
    Q_I = np.asarray(Q_I, dtype=np.float64)
    return np.where(Q_I > 0, p_max / np.where(Q_I > 0, Q_I, 1.0), np.inf)


def antagonistic_pressures(delta_p: np.ndarray, p_max: float) -> np.ndarray:
    """[p̄ + Δp_1/2, p̄ - Δp_1/2, ...] with p̄ = p_max / 2, before saturation"""
    delta_p = np.asarray(delta_p, dtype=np.float64)
    u = np.empty(2 * delta_p.shape[0])
    u[0::2] = 0.5 * p_max + 0.5 * delta_p
    u[1::2] = 0.5 * p_max - 0.5 * delta_p
    return u


@dataclass
class PIState:
    integral: np.ndarray
    """(n,) integrated joint error, rad·s"""

    @classmethod
    def empty(cls, n: int) -> "PIState":
        return cls(integral=np.zeros(n))


class PIOutput(NamedTuple):
    u: np.ndarray
    """(2n,) saturated pressures, Pa"""
    state: PIState
    saturated: np.ndarray
    """(n,) joints whose pressures hit a limit"""


def pi_control(
    q_d: np.ndarray, q: np.ndarray, state: PIState, config: PIConfig
) -> PIOutput:
    """One controller period: integrates the error (clamped), maps the
    pressure differences onto the bellows and saturates to [0, p_max]
    """
    e = np.asarray(q_d, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    clamp = config.integrator_clamp
    candidate = np.clip(state.integral + e * config.period, -clamp, clamp)
    raw = antagonistic_pressures(config.Q_P * e + config.Q_I * candidate, config.p_max)
    pairs = raw.reshape(-1, 2)
    saturated = np.any((pairs < 0.0) | (pairs > config.p_max), axis=1)
    integral = np.where(saturated, state.integral, candidate)
    if np.any(saturated):
        raw = antagonistic_pressures(config.Q_P * e + config.Q_I * integral, config.p_max)
    return PIOutput(
        u=np.clip(raw, 0.0, config.p_max),
        state=PIState(integral=integral),
        saturated=saturated,
    )


class PIController:
    name = "pi"

    def __init__(self, config: PIConfig, /, *, state: Optional[PIState] = None) -> None:
        self.config = config
        self.state = state if state is not None else PIState.empty(config.Q_P.shape[0])

    def reset(self) -> None:
        self.state = PIState.empty(self.config.Q_P.shape[0])

    def control(self, q_d: np.ndarray, q: np.ndarray) -> np.ndarray:
        out = pi_control(q_d, q, self.state, self.config)
        self.state = out.state
        return out.u

    def update(self, t: float, x: np.ndarray, reference: Reference) -> ControlUpdate:
        started = time.perf_counter()
        n = self.config.Q_P.shape[0]
        u = self.control(reference.at(t)[0, :n], x[:n])
        return ControlUpdate(
            u=u,
            hold=self.config.period,
            solve_time=time.perf_counter() - started,
            warm_start=False,
        )


if TYPE_CHECKING:
    _: Type[Controller] = PIController
