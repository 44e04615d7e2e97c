import math
from typing import TYPE_CHECKING, List, NamedTuple, Optional, Protocol, Type

import numpy as np

from softpinn.dynamics import kernels
from softpinn.dynamics.robot_model import RobotModel
from softpinn.dynamics.types import Domain, as_vector
from softpinn.errors import DimensionMismatchError, SingularMassMatrixError


def _elementary(rot_x: float, trans_x: float, rot_z: float, trans_z: float) -> np.ndarray:
    cx, sx = math.cos(rot_x), math.sin(rot_x)
    cz, sz = math.cos(rot_z), math.sin(rot_z)
    Rx = np.array([[1, 0, 0, 0], [0, cx, -sx, 0], [0, sx, cx, 0], [0, 0, 0, 1.0]])
    Tx = np.eye(4)
    Tx[0, 3] = trans_x
    Rz = np.array([[cz, -sz, 0, 0], [sz, cz, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])
    Tz = np.eye(4)
    Tz[2, 3] = trans_z
    return Rx @ Tx @ Rz @ Tz


def forward_kinematics(q: np.ndarray, model: RobotModel) -> List[np.ndarray]:
    """Homogeneous transforms of the base frame (index 0) and every joint
    frame (index i for joint i) expressed in the base frame
    """
    q = as_vector(q, model.n, "q")
    frames = [np.eye(4)]
    for j in range(model.n):
        a, alpha, d, offset = model.dh_table[j]
        frames.append(frames[-1] @ _elementary(alpha, a, q[j] + offset, d))
    return frames


def gravity_vector(delta: Domain, model: RobotModel) -> np.ndarray:
    """World gravity in the base frame for the given base tilt"""
    return model.g0 * np.array(
        [-math.cos(delta.beta_g), 0.0, math.sin(delta.beta_g)]
    )


class DynamicsTerms(NamedTuple):
    gravity: np.ndarray
    """(B, n) gravity torques g"""
    inertial: np.ndarray
    """(B, n) inertial torques M q̈"""
    coriolis: np.ndarray
    """(B, n) Coriolis and centrifugal torques c"""


def dynamics_terms(
    Q: np.ndarray, QD: np.ndarray, QDD: np.ndarray, D: np.ndarray, model: RobotModel
) -> DynamicsTerms:
    """Rigid-body torque terms for a batch of rows; D holds one [m_e, beta_g]
    row per sample
    """
    Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
    QD = np.ascontiguousarray(np.atleast_2d(QD), dtype=np.float64)
    QDD = np.ascontiguousarray(np.atleast_2d(QDD), dtype=np.float64)
    D = np.ascontiguousarray(np.atleast_2d(D), dtype=np.float64)
    B = Q.shape[0]
    for name, arr, width in (
        ("q", Q, model.n),
        ("qd", QD, model.n),
        ("qdd", QDD, model.n),
        ("domain", D, 2),
    ):
        if arr.shape != (B, width):
            raise DimensionMismatchError(
                f"{name} rows must have shape ({B}, {width}), got {arr.shape}"
            )
    G = np.empty((B, model.n))
    MQDD = np.empty((B, model.n))
    C = np.empty((B, model.n))
    kernels.dynamics_terms_batch(Q, QD, QDD, D, *model.kernel_params, G, MQDD, C)
    return DynamicsTerms(gravity=G, inertial=MQDD, coriolis=C)


def _single_terms(
    q: np.ndarray, qd: np.ndarray, qdd: np.ndarray, delta: Domain, model: RobotModel
) -> DynamicsTerms:
    n = model.n
    terms = dynamics_terms(
        as_vector(q, n, "q")[None],
        as_vector(qd, n, "qd")[None],
        as_vector(qdd, n, "qdd")[None],
        delta.as_array()[None],
        model,
    )
    return DynamicsTerms(*(term[0] for term in terms))


def gravity_torques(q: np.ndarray, delta: Domain, model: RobotModel) -> np.ndarray:
    zeros = np.zeros(model.n)
    return _single_terms(q, zeros, zeros, delta, model).gravity


def coriolis_torques(
    q: np.ndarray, qd: np.ndarray, delta: Domain, model: RobotModel
) -> np.ndarray:
    zeros = np.zeros(model.n)
    return _single_terms(q, qd, zeros, delta, model).coriolis


def mass_matrix(q: np.ndarray, delta: Domain, model: RobotModel) -> np.ndarray:
    q = as_vector(q, model.n, "q")
    params = model.kernel_params
    mass_e, com_e, inertia_e, _ = kernels.prepare_domain(
        delta.m_e,
        delta.beta_g,
        params.mass,
        params.com,
        params.inertia,
        params.payload_offset,
        params.consts,
    )
    R = np.empty((model.n, 3, 3))
    p = np.empty((model.n, 3))
    kernels.link_transforms(q, params.dh, R, p)
    M = np.empty((model.n, model.n))
    kernels.mass_matrix_from_links(R, p, mass_e, com_e, inertia_e, M)
    return M


def stiffness_torques(q: np.ndarray, model: RobotModel) -> np.ndarray:
    return model.k_s * as_vector(q, model.n, "q")


def friction_torques(qd: np.ndarray, model: RobotModel) -> np.ndarray:
    qd = as_vector(qd, model.n, "qd")
    return model.k_v * qd + model.k_C * np.tanh(qd * math.pi / model.qdot_C)


def contact_torques(q: np.ndarray, qd: np.ndarray, model: RobotModel) -> np.ndarray:
    """Soft-boundary torques; zero while |q_i| ≤ q_bt"""
    q = as_vector(q, model.n, "q")
    qd = as_vector(qd, model.n, "qd")
    magnitude = np.abs(q)
    dq = np.maximum(magnitude - model.q_bt, 0.0)
    torque = np.sign(q) * dq**1.5 * model.k_bs + np.sqrt(dq) * qd * model.k_bd
    return np.where(magnitude > model.q_bt, torque, 0.0)


def actuation_torques(p: np.ndarray, model: RobotModel) -> np.ndarray:
    """Joint torques of antagonistic bellows pairs ordered
    [p_11, p_12, ..., p_n1, p_n2]
    """
    p = as_vector(p, 2 * model.n, "pressures")
    return model.A_p * model.r_p * (p[0::2] - p[1::2])


def forward_dynamics(
    x: np.ndarray, u: np.ndarray, delta: Domain, model: RobotModel
) -> np.ndarray:
    """The state derivative [qd, qdd] with the bellows at their desired pressures"""
    x = as_vector(x, 2 * model.n, "state")
    u = as_vector(u, 2 * model.n, "input")
    out = np.empty(2 * model.n)
    if not kernels.fp_derivative(
        x, u, delta.m_e, delta.beta_g, *model.kernel_params, out
    ):
        raise SingularMassMatrixError(
            f"mass matrix is not positive definite at q={x[: model.n]}"
        )
    return out


def inverse_dynamics(
    q: np.ndarray, qd: np.ndarray, qdd: np.ndarray, delta: Domain, model: RobotModel
) -> np.ndarray:
    """Actuation torque producing qdd: g + s + M qdd + c + d + b"""
    terms = _single_terms(q, qd, qdd, delta, model)
    return (
        terms.gravity
        + stiffness_torques(q, model)
        + terms.inertial
        + terms.coriolis
        + friction_torques(qd, model)
        + contact_torques(q, qd, model)
    )


def _centers_of_mass(
    frames: List[np.ndarray], model: RobotModel
) -> List[np.ndarray]:
    return [
        frames[j + 1][:3, :3] @ model.com[j] + frames[j + 1][:3, 3]
        for j in range(model.n)
    ]


def _payload_position(frames: List[np.ndarray], model: RobotModel) -> np.ndarray:
    assert model.payload_offset is not None
    return frames[model.n][:3, :3] @ model.payload_offset + frames[model.n][:3, 3]


def potential_energy(q: np.ndarray, delta: Domain, model: RobotModel) -> float:
    """Gravitational potential of the segments and the payload, J (zero at
    the base origin)
    """
    frames = forward_kinematics(q, model)
    g = gravity_vector(delta, model)
    energy = 0.0
    for mass, r in zip(model.masses, _centers_of_mass(frames, model)):
        energy -= mass * float(g @ r)
    energy -= delta.m_e * float(g @ _payload_position(frames, model))
    return energy


def kinetic_energy(
    q: np.ndarray, qd: np.ndarray, delta: Domain, model: RobotModel
) -> float:
    """Kinetic energy summed body by body from base-frame velocities, J"""
    qd = as_vector(qd, model.n, "qd")
    frames = forward_kinematics(q, model)
    axes = [frames[j + 1][:3, 2] for j in range(model.n)]
    origins = [frames[j + 1][:3, 3] for j in range(model.n)]

    def point_velocity(r: np.ndarray, upto: int) -> np.ndarray:
        v = np.zeros(3)
        for k in range(upto + 1):
            v += qd[k] * np.cross(axes[k], r - origins[k])
        return v

    energy = 0.0
    omega = np.zeros(3)
    for j, r in enumerate(_centers_of_mass(frames, model)):
        omega = omega + qd[j] * axes[j]
        v = point_velocity(r, j)
        rot = frames[j + 1][:3, :3]
        inertia_world = rot @ model.inertia[j] @ rot.T
        energy += 0.5 * model.masses[j] * float(v @ v)
        energy += 0.5 * float(omega @ inertia_world @ omega)
    v_e = point_velocity(_payload_position(frames, model), model.n - 1)
    energy += 0.5 * delta.m_e * float(v_e @ v_e)
    return energy


class BatchDerivative(NamedTuple):
    derivative: np.ndarray
    """(B, 2n) state derivatives"""
    jacobian: Optional[np.ndarray]
    """(B, 2n, 2n) derivative of each row wrt its state, when requested"""
    ok: np.ndarray
    """(B,) False where the model could not be evaluated or returned a
    non-finite or diverged value
    """


class BatchedDynamics(Protocol):
    """A state-space model that can be evaluated over many rows at once"""

    @property
    def n(self) -> int:
        """Joint count"""

    def __call__(self, x: np.ndarray, u: np.ndarray, delta: Domain) -> np.ndarray:
        """The state derivative for a single state, input and domain"""

    def evaluate(
        self, X: np.ndarray, U: np.ndarray, D: np.ndarray, /, *, jacobian: bool
    ) -> BatchDerivative:
        """State derivatives for rows of states X (B, 2n), inputs U (B, 2n) and
        domains D (B, 2); with `jacobian` also the state Jacobians
        """


class FirstPrinciplesDynamics:
    """The first-principles state-space model of a robot as a callable
    `f(x, u, delta)`. Integrators recognise it and switch to the compiled
    rollout kernels.
    """

    def __init__(self, model: RobotModel, /, *, jacobian_step: float = 1e-6) -> None:
        self.model = model
        self.jacobian_step = jacobian_step
        """Central-difference step for the state Jacobian, in rad and rad/s"""

    @property
    def n(self) -> int:
        return self.model.n

    def __call__(self, x: np.ndarray, u: np.ndarray, delta: Domain) -> np.ndarray:
        return forward_dynamics(x, u, delta, self.model)

    def evaluate(
        self, X: np.ndarray, U: np.ndarray, D: np.ndarray, /, *, jacobian: bool
    ) -> BatchDerivative:
        dim = 2 * self.model.n
        X = np.ascontiguousarray(X, dtype=np.float64)
        U = np.ascontiguousarray(U, dtype=np.float64)
        D = np.ascontiguousarray(D, dtype=np.float64)
        B = X.shape[0]
        if X.shape != (B, dim) or U.shape != (B, dim) or D.shape != (B, 2):
            raise DimensionMismatchError(
                f"expected rows of width {dim}, {dim}, 2; got {X.shape}, {U.shape}, {D.shape}"
            )
        F = np.empty((B, dim))
        J = np.zeros((B, dim, dim) if jacobian else (0, dim, dim))
        ok = np.empty(B, dtype=np.bool_)
        eps = np.full(dim, self.jacobian_step)
        kernels.fp_batch(
            X, U, D, eps, jacobian, *self.model.kernel_params, F, J, ok
        )
        return BatchDerivative(derivative=F, jacobian=J if jacobian else None, ok=ok)


if TYPE_CHECKING:
    _: Type[BatchedDynamics] = FirstPrinciplesDynamics
