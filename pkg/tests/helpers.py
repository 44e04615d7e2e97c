import numpy as np

from softpinn.config.config import BoundariesFromValues
from softpinn.dynamics import (
    DEG,
    BatchDerivative,
    Domain,
    RobotModel,
    dynamics_terms,
)
from softpinn.identification.dataset import Dataset

P_MAX = 70000.0
"""Pressure limit shared by the test boundaries and controllers, Pa"""


def random_q(rng: np.random.Generator, n: int, limit_deg: float = 25.0) -> np.ndarray:
    return rng.uniform(-limit_deg, limit_deg, n) * DEG


def random_domain(rng: np.random.Generator) -> Domain:
    return Domain(
        m_e=float(rng.uniform(0, 0.2)), beta_g=float(rng.uniform(0, 90)) * DEG
    )


def conservative(model: RobotModel) -> RobotModel:
    """The same robot without any dissipation"""
    return model.with_parameters(
        k_s=model.k_s,
        k_v=np.zeros(model.n),
        k_C=np.zeros(model.n),
        k_bs=model.k_bs,
        k_bd=0.0,
    )


def balanced_input(model: RobotModel, torque: np.ndarray, mean: float = 35000.0) -> np.ndarray:
    """Bellows pressures around `mean` producing the given joint torques"""
    half = torque / (2 * model.A_p * model.r_p)
    u = np.empty(2 * model.n)
    u[0::2] = mean + half
    u[1::2] = mean - half
    return u


def joint_torques(
    model: RobotModel,
    Q: np.ndarray,
    QD: np.ndarray,
    QDD: np.ndarray,
    delta: Domain,
) -> np.ndarray:
    """Actuation torques reproducing the given motion, one row per sample"""
    D = np.tile(delta.as_array(), (Q.shape[0], 1))
    terms = dynamics_terms(Q, QD, QDD, D, model)
    penetration = np.maximum(np.abs(Q) - model.q_bt, 0.0)
    return (
        terms.gravity
        + terms.inertial
        + terms.coriolis
        + model.k_s * Q
        + model.k_v * QD
        + model.k_C * np.tanh(QD * np.pi / model.qdot_C)
        + model.k_bs * np.sign(Q) * penetration**1.5
        + model.k_bd * np.sqrt(penetration) * QD
    )


def pressures_for(model: RobotModel, tau: np.ndarray, mean: float = 35000.0) -> np.ndarray:
    half = tau / (2 * model.A_p * model.r_p)
    p = np.empty((tau.shape[0], 2 * model.n))
    p[:, 0::2] = mean + half
    p[:, 1::2] = mean - half
    return p


def sinusoid_dataset(
    model: RobotModel,
    rng: np.random.Generator,
    /,
    *,
    duration: float = 120.0,
    rate: float = 50.0,
    amplitude_deg: float = 16.0,
    delta: Domain = Domain(0.0, 0.0),
) -> Dataset:
    """Slow multi-sine joint motion with the pressures that produce it"""
    t = np.arange(int(round(duration * rate))) / rate
    Q = np.zeros((t.shape[0], model.n))
    QD = np.zeros_like(Q)
    QDD = np.zeros_like(Q)
    for i in range(model.n):
        for _ in range(2):
            a = 0.5 * amplitude_deg * DEG * rng.uniform(0.7, 1.0)
            w = 2 * np.pi * rng.uniform(0.1, 0.3)
            phase = rng.uniform(0, 2 * np.pi)
            Q[:, i] += a * np.sin(w * t + phase)
            QD[:, i] += a * w * np.cos(w * t + phase)
            QDD[:, i] -= a * w**2 * np.sin(w * t + phase)
    p = pressures_for(model, joint_torques(model, Q, QD, QDD, delta))
    return Dataset(rate=rate, t=t, q=Q, qd=QD, p=p, p_d=p, domain=delta)


def box(kappa: float = 1.1) -> BoundariesFromValues:
    """A sampled box of moderate size for two- and five-joint tests"""
    return BoundariesFromValues(
        q_max=30 * DEG,
        qd_max=120 * DEG,
        p_max=P_MAX,
        m_e_max=0.2,
        beta_max=90 * DEG,
        kappa=kappa,
    )


def central_difference(f, arr: np.ndarray, index, h: float = 1e-5) -> float:
    """d f() / d arr[index] with arr perturbed in place and restored"""
    old = arr[index]
    arr[index] = old + h
    upper = f()
    arr[index] = old - h
    lower = f()
    arr[index] = old
    return (upper - lower) / (2 * h)


class LinearDynamics:
    """f(x, u, delta) = A x + B u with an exact Jacobian; rows whose state
    exceeds `fail_above` in magnitude report as not evaluable
    """

    def __init__(self, A: np.ndarray, B: np.ndarray, fail_above: float = np.inf) -> None:
        self.A = np.asarray(A, dtype=np.float64)
        self.B = np.asarray(B, dtype=np.float64)
        self.fail_above = fail_above

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    def __call__(self, x: np.ndarray, u: np.ndarray, delta: Domain) -> np.ndarray:
        return self.A @ x + self.B @ u

    def evaluate(
        self, X: np.ndarray, U: np.ndarray, D: np.ndarray, /, *, jacobian: bool
    ) -> BatchDerivative:
        ok = np.all(np.abs(X) <= self.fail_above, axis=1)
        F = X @ self.A.T + U @ self.B.T
        F[~ok] = np.nan
        return BatchDerivative(
            derivative=F,
            jacobian=np.broadcast_to(self.A, (X.shape[0],) + self.A.shape).copy()
            if jacobian
            else None,
            ok=ok,
        )
