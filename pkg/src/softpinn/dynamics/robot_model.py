import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

DEG = math.pi / 180.0
"""Radians per degree"""

MBAR = 100.0
"""Pascal per millibar"""

GRAVITY = 9.81

# identified parameters of the reference five-joint robot, in the
# degree-based units they are usually quoted in
DEFAULT_K_S_DEG = (0.035, 0.034, 0.043, 0.035, 0.041)
"""Stiffness per joint, N·m/°"""
DEFAULT_K_V_DEG = (0.008, 0.008, 0.010, 0.011, 0.011)
"""Viscous friction per joint, N·m·s/°"""
DEFAULT_K_C = (0.171, 0.214, 0.233, 0.204, 0.232)
"""Coulomb friction per joint, N·m"""
DEFAULT_K_BS_DEG = 0.010
"""Contact stiffness, N·m/°^1.5"""
DEFAULT_K_BD_DEG = 0.005
"""Contact damping, N·m·s/°^1.5"""
DEFAULT_QDOT_C_DEG = 1.0
DEFAULT_Q_BT_DEG = 10.0

DEFAULT_H = 0.0534
DEFAULT_A_P = 639.8e-6
DEFAULT_R_P = 24.1e-3
DEFAULT_SEGMENT_MASS = 0.2
DEFAULT_SEGMENT_INERTIA = (1.0e-3, 4.0e-3, 4.0e-3)
"""Lumped segment inertia about the COM, kg·m², axis order x (along the
segment), y, z. Includes housing, bellows and tubing; keeps the fastest
friction mode of the chain near 2e4 1/s so Euler at 20 µs and RK4 at
100 µs stay stable.
"""


def stiffness_from_deg(value: float) -> float:
    """Converts a stiffness or viscous coefficient quoted per degree to per radian"""
    return value / DEG


def contact_from_deg(value: float) -> float:
    """Converts a contact coefficient quoted per degree^1.5 to per radian^1.5"""
    return value / DEG**1.5


def stiffness_to_deg(value: float) -> float:
    return value * DEG


def contact_to_deg(value: float) -> float:
    return value * DEG**1.5


class KernelParams(NamedTuple):
    """The robot model flattened into the arrays the compiled kernels consume.
    Always unpacked in this field order.
    """

    dh: np.ndarray
    """(n, 4) rows of [a_{i-1}, alpha_{i-1}, d_i, theta_offset_i] (modified DH)"""
    mass: np.ndarray
    """(n,) segment masses"""
    com: np.ndarray
    """(n, 3) centers of mass, each in its own joint frame"""
    inertia: np.ndarray
    """(n, 3, 3) inertia tensors about the COM, each in its own joint frame"""
    payload_offset: np.ndarray
    """(3,) payload position in the last joint frame"""
    joint_k: np.ndarray
    """(n, 3) rows of [k_s, k_v, k_C]"""
    consts: np.ndarray
    """[A_p·r_p, k_bs, k_bd, qdot_C, q_bt, g0]"""


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic and inertial constants together with the identified
    parameters of an articulated soft robot. Everything is stored in SI
    units with angles in radians.
    """

    n: int
    """Joint count"""
    h: float
    """Actuator height (segment length), m"""
    dh_table: np.ndarray
    """(n, 4) modified Denavit-Hartenberg rows [a_{i-1}, alpha_{i-1}, d_i,
    theta_offset_i]; lengths in m, angles in rad
    """
    masses: np.ndarray
    """Per-segment mass, kg"""
    com: np.ndarray
    """(n, 3) per-segment center of mass in the segment's joint frame, m"""
    inertia: np.ndarray
    """(n, 3, 3) per-segment inertia about its COM, kg·m²"""
    A_p: float
    """Pressure area of one bellows, m²"""
    r_p: float
    """Lever arm of the bellows force, m"""
    k_s: np.ndarray
    """Stiffness per joint, N·m/rad"""
    k_v: np.ndarray
    """Viscous friction per joint, N·m·s/rad"""
    k_C: np.ndarray
    """Coulomb friction per joint, N·m"""
    k_bs: float
    """Contact stiffness, N·m/rad^1.5"""
    k_bd: float
    """Contact damping, N·m·s/rad^1.5"""
    qdot_C: float = DEFAULT_QDOT_C_DEG * DEG
    """Coulomb velocity threshold, rad/s"""
    q_bt: float = DEFAULT_Q_BT_DEG * DEG
    """Soft boundary threshold, rad"""
    g0: float = GRAVITY
    payload_offset: Optional[np.ndarray] = field(default=None)
    """Payload position in the last joint frame; the distal end of the last
    segment (h along its x-axis) when not given
    """

    def __post_init__(self) -> None:
        n = self.n
        if n < 1:
            raise ValueError(f"joint count must be positive, got {n}")
        for name, shape in (
            ("dh_table", (n, 4)),
            ("masses", (n,)),
            ("com", (n, 3)),
            ("inertia", (n, 3, 3)),
            ("k_s", (n,)),
            ("k_v", (n,)),
            ("k_C", (n,)),
        ):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)

        if self.payload_offset is None:
            offset = np.array([self.h, 0.0, 0.0])
        else:
            offset = np.ascontiguousarray(self.payload_offset, dtype=np.float64)
            if offset.shape != (3,):
                raise ValueError("payload_offset must have shape (3,)")
        object.__setattr__(self, "payload_offset", offset)

        if np.any(self.masses <= 0):
            raise ValueError("all segment masses must be positive")
        for i in range(n):
            tensor = self.inertia[i]
            if not np.allclose(tensor, tensor.T, rtol=1e-12, atol=0.0):
                raise ValueError(f"inertia tensor of segment {i} is not symmetric")
            if np.linalg.eigvalsh(tensor).min() <= 0:
                raise ValueError(
                    f"inertia tensor of segment {i} is not positive definite"
                )
        for name in ("k_s", "k_v", "k_C"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be nonnegative")
        if self.k_bs < 0 or self.k_bd < 0:
            raise ValueError("contact coefficients must be nonnegative")
        if self.qdot_C <= 0:
            raise ValueError("qdot_C must be positive")
        if self.q_bt <= 0:
            raise ValueError("q_bt must be positive")

    @cached_property
    def kernel_params(self) -> KernelParams:
        assert self.payload_offset is not None
        return KernelParams(
            dh=self.dh_table,
            mass=self.masses,
            com=self.com,
            inertia=self.inertia,
            payload_offset=self.payload_offset,
            joint_k=np.ascontiguousarray(np.stack([self.k_s, self.k_v, self.k_C], 1)),
            consts=np.array(
                [
                    self.A_p * self.r_p,
                    self.k_bs,
                    self.k_bd,
                    self.qdot_C,
                    self.q_bt,
                    self.g0,
                ]
            ),
        )

    def with_parameters(
        self,
        /,
        *,
        k_s: Sequence[float],
        k_v: Sequence[float],
        k_C: Sequence[float],
        k_bs: float,
        k_bd: float,
    ) -> "RobotModel":
        """Returns a copy with the identified parameters replaced"""
        return RobotModel(
            n=self.n,
            h=self.h,
            dh_table=self.dh_table.copy(),
            masses=self.masses.copy(),
            com=self.com.copy(),
            inertia=self.inertia.copy(),
            A_p=self.A_p,
            r_p=self.r_p,
            k_s=np.asarray(k_s, dtype=np.float64),
            k_v=np.asarray(k_v, dtype=np.float64),
            k_C=np.asarray(k_C, dtype=np.float64),
            k_bs=float(k_bs),
            k_bd=float(k_bd),
            qdot_C=self.qdot_C,
            q_bt=self.q_bt,
            g0=self.g0,
            payload_offset=self.payload_offset,
        )


def default_dh_table(n: int, h: float = DEFAULT_H) -> np.ndarray:
    """A straight serial chain along the base x-axis: the first joint sits at
    the base origin, each further joint is h along the previous segment and
    twisted 90° about it.
    """
    table = np.zeros((n, 4))
    for i in range(1, n):
        table[i, 0] = h
        table[i, 1] = math.pi / 2
    return table


def _per_joint(values: Sequence[float], n: int) -> List[float]:
    return [values[i % len(values)] for i in range(n)]


def default_robot_model(n: int = 5) -> RobotModel:
    """The reference robot: identified parameters of the five-joint robot
    (cycled for longer chains), 0.2 kg per segment and lumped
    segment inertias.
    """
    h = DEFAULT_H
    return RobotModel(
        n=n,
        h=h,
        dh_table=default_dh_table(n, h),
        masses=np.full(n, DEFAULT_SEGMENT_MASS),
        com=np.tile([h / 2, 0.0, 0.0], (n, 1)),
        inertia=np.tile(np.diag(DEFAULT_SEGMENT_INERTIA), (n, 1, 1)),
        A_p=DEFAULT_A_P,
        r_p=DEFAULT_R_P,
        k_s=np.array([stiffness_from_deg(v) for v in _per_joint(DEFAULT_K_S_DEG, n)]),
        k_v=np.array([stiffness_from_deg(v) for v in _per_joint(DEFAULT_K_V_DEG, n)]),
        k_C=np.array(_per_joint(DEFAULT_K_C, n)),
        k_bs=contact_from_deg(DEFAULT_K_BS_DEG),
        k_bd=contact_from_deg(DEFAULT_K_BD_DEG),
        qdot_C=DEFAULT_QDOT_C_DEG * DEG,
        q_bt=DEFAULT_Q_BT_DEG * DEG,
    )
