"""Joint-space reference trajectories for the tracking experiments."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d

from softpinn.dynamics.robot_model import DEG

REFERENCE_AMPLITUDE = 18 * DEG
"""Largest commanded joint angle, rad"""

REFERENCE_RISE_TIME = (0.4, 1.6)
"""Range of the duration of each linear segment, s"""

REFERENCE_SMOOTHING = 0.2
"""Length of the moving mean over the chained ramps, s"""


@dataclass
class Reference:
    """Desired joint angles and velocities on a uniform grid"""

    T_s: float
    """Grid spacing, s"""
    q_d: np.ndarray
    """(K, n) desired angles, rad"""
    qd_d: np.ndarray
    """(K, n) desired velocities, rad/s"""

    def __post_init__(self) -> None:
        if not self.T_s > 0:
            raise ValueError(f"grid spacing must be positive, got {self.T_s}")
        self.q_d = np.ascontiguousarray(self.q_d, dtype=np.float64)
        self.qd_d = np.ascontiguousarray(self.qd_d, dtype=np.float64)
        if self.q_d.ndim != 2 or self.q_d.shape != self.qd_d.shape or self.q_d.shape[0] < 2:
            raise ValueError(
                f"need at least two matching (K, n) rows, got {self.q_d.shape} and {self.qd_d.shape}"
            )

    @property
    def n(self) -> int:
        return self.q_d.shape[1]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.q_d.shape[0]) * self.T_s

    @property
    def duration(self) -> float:
        return (self.q_d.shape[0] - 1) * self.T_s

    def states(self) -> np.ndarray:
        """(K, 2n) desired states [q_d, qd_d]"""
        return np.concatenate([self.q_d, self.qd_d], axis=1)

    def at(self, t: np.ndarray) -> np.ndarray:
        """Desired states at arbitrary times by linear interpolation; times
        past the end hold the last row
        """
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        grid = self.t
        states = self.states()
        return np.stack(
            [np.interp(t, grid, states[:, j]) for j in range(states.shape[1])], axis=1
        )

    def window(self, t: float, m: int, step: float) -> np.ndarray:
        """(m, 2n) desired states at t + step, ..., t + m * step"""
        return self.at(t + step * np.arange(1, m + 1))


def zero_reference(n: int, duration: float, T_s: float = 0.02) -> Reference:
    K = int(round(duration / T_s)) + 1
    return Reference(T_s=T_s, q_d=np.zeros((K, n)), qd_d=np.zeros((K, n)))


def _chained_ramps(
    rng: np.random.Generator,
    K: int,
    T_s: float,
    amplitude: float,
    rise_time: Tuple[float, float],
) -> np.ndarray:
    """Piecewise-linear path from 0 through random targets, sampled at K
    points of spacing T_s
    """
    end = (K - 1) * T_s
    knots_t = [0.0]
    knots_q = [0.0]
    while knots_t[-1] < end:
        knots_t.append(knots_t[-1] + rng.uniform(*rise_time))
        knots_q.append(rng.uniform(-amplitude, amplitude))
    return np.interp(np.arange(K) * T_s, knots_t, knots_q)


def generate_reference(
    n: int,
    duration: float,
    rng: np.random.Generator,
    /,
    *,
    T_s: float = 0.02,
    amplitude: float = REFERENCE_AMPLITUDE,
    rise_time: Tuple[float, float] = REFERENCE_RISE_TIME,
    smoothing: float = REFERENCE_SMOOTHING,
) -> Reference:
    """Per joint, linear ramps with random rise times into random targets
    within +-amplitude, smoothed by a moving mean; the desired velocity is
    the finite difference of the smoothed angles
    """
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    K = int(round(duration / T_s)) + 1
    q_d = np.column_stack(
        [_chained_ramps(rng, K, T_s, amplitude, rise_time) for _ in range(n)]
    )
    window = max(1, int(round(smoothing / T_s)))
    q_d = uniform_filter1d(q_d, size=window, axis=0, mode="nearest")
    qd_d = np.gradient(q_d, T_s, axis=0)
    return Reference(T_s=T_s, q_d=q_d, qd_d=qd_d)
