from dataclasses import dataclass
from typing import Protocol

import numpy as np

from softpinn.dynamics.robot_model import RobotModel


class JointSamples(Protocol):
    @property
    def q(self) -> np.ndarray:
        """(N, n) joint angles, rad"""

    @property
    def qd(self) -> np.ndarray:
        """(N, n) joint velocities, rad/s"""


@dataclass(frozen=True)
class Partition:
    """Per-joint row masks of the three identification subsets. For every
    joint each row belongs to exactly one subset.
    """

    static: np.ndarray
    """(N, n) slow rows inside the soft boundaries"""
    dynamic: np.ndarray
    """(N, n) moving rows inside the soft boundaries"""
    contact: np.ndarray
    """(N, n) rows beyond the soft boundaries"""

    def fractions(self) -> np.ndarray:
        """(n, 3) share of rows per joint in the static, dynamic and contact
        subsets
        """
        rows = max(self.static.shape[0], 1)
        return np.stack(
            [
                self.static.sum(axis=0) / rows,
                self.dynamic.sum(axis=0) / rows,
                self.contact.sum(axis=0) / rows,
            ],
            axis=1,
        )


def partition(samples: JointSamples, model: RobotModel) -> Partition:
    """Splits rows per joint by the Coulomb velocity threshold and the soft
    boundary; beyond the boundary always wins
    """
    q = np.asarray(samples.q)
    qd = np.asarray(samples.qd)
    if q.shape != qd.shape or q.ndim != 2 or q.shape[1] != model.n:
        raise ValueError(
            f"expected matching (N, {model.n}) angles and velocities, got {q.shape} and {qd.shape}"
        )
    inside = np.abs(q) <= model.q_bt
    slow = np.abs(qd) <= model.qdot_C
    return Partition(
        static=inside & slow,
        dynamic=inside & ~slow,
        contact=~inside,
    )
