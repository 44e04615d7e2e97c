from dataclasses import dataclass

import numpy as np

from softpinn.config.config import Boundaries
from softpinn.errors import DimensionMismatchError


@dataclass(frozen=True)
class MinMax:
    """Affine map of every channel from [low, high] onto [-1, 1]"""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self) -> None:
        low = np.atleast_1d(np.asarray(self.low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(self.high, dtype=np.float64))
        if low.shape != high.shape or low.ndim != 1:
            raise DimensionMismatchError(
                f"low {low.shape} and high {high.shape} must be matching vectors"
            )
        if not np.all(high > low):
            raise ValueError("every channel needs high > low")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def width(self) -> int:
        return self.low.shape[0]

    @property
    def factor(self) -> np.ndarray:
        """d(scaled)/d(value) per channel"""
        return 2.0 / (self.high - self.low)

    def scale(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.low) * self.factor - 1.0

    def unscale(self, scaled: np.ndarray) -> np.ndarray:
        return (np.asarray(scaled, dtype=np.float64) + 1.0) / self.factor + self.low


@dataclass(frozen=True)
class Scaler:
    """Channel ranges of the surrogate inputs and outputs. States use the
    same map on the way in and out.
    """

    t: MinMax
    """Time since the initial state, s"""
    x: MinMax
    """State [q, qd], rad and rad/s"""
    u: MinMax
    """Bellows pressures, Pa"""
    delta: MinMax
    """Domain [m_e, beta_g], kg and rad"""

    @property
    def n(self) -> int:
        return self.x.width // 2


def inflated_scaler(n: int, T_s: float, boundaries: Boundaries) -> Scaler:
    """The boundaries inflated by kappa: symmetric ranges about zero grow on
    both sides, ranges starting at zero grow upwards only
    """
    kappa = boundaries.kappa
    x_high = np.concatenate(
        [np.full(n, kappa * boundaries.q_max), np.full(n, kappa * boundaries.qd_max)]
    )
    return Scaler(
        t=MinMax(np.zeros(1), np.array([kappa * T_s])),
        x=MinMax(-x_high, x_high),
        u=MinMax(np.zeros(2 * n), np.full(2 * n, kappa * boundaries.p_max)),
        delta=MinMax(
            np.zeros(2),
            np.array([kappa * boundaries.m_e_max, kappa * boundaries.beta_max]),
        ),
    )
