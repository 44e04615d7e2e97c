import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from softpinn.errors import DimensionMismatchError


@dataclass(frozen=True)
class Domain:
    """The operating condition the dynamics are evaluated in"""

    m_e: float
    """End-effector payload, kg"""
    beta_g: float
    """Base tilt against gravity, rad"""

    def __post_init__(self) -> None:
        if not math.isfinite(self.m_e) or not math.isfinite(self.beta_g):
            raise ValueError("domain entries must be finite")
        if self.m_e < 0:
            raise ValueError(f"payload must be nonnegative, got {self.m_e}")

    def as_array(self) -> np.ndarray:
        return np.array([self.m_e, self.beta_g])

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Domain":
        return cls(m_e=float(values[0]), beta_g=float(values[1]))

    def describe(self) -> str:
        """Compact label in file units, e.g. `me=0.2,beta=45`"""
        return f"me={self.m_e:g},beta={math.degrees(self.beta_g):g}"


NOMINAL_DOMAIN = Domain(m_e=0.0, beta_g=0.0)
"""The training domain: no payload, gravity along the base axis"""


def as_vector(value: object, length: int, name: str) -> np.ndarray:
    """Converts to a contiguous float64 vector of the given length"""
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if arr.shape != (length,):
        raise DimensionMismatchError(
            f"{name} must have shape ({length},), got {arr.shape}"
        )
    return arr


def split_state(x: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Splits a state vector [q, qd] into its joint angles and velocities"""
    x = as_vector(x, 2 * n, "state")
    return x[:n], x[n:]


def make_state(q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.concatenate([q, as_vector(qd, q.shape[0], "qd")])
