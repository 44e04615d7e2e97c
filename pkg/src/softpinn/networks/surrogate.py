"""One-step state predictors built on the tanh core.

Everything inside the network lives in scaled units: states, inputs and
domains are mapped onto [-1, 1] by the model's Scaler and time is measured
in horizons, tau = t / T_s. The PINC head feeds the scaled time to the core
and reads the scaled state off its output; the DD-PINN head has the core
emit ansatz coefficients and adds the ansatz to the scaled initial state,
which makes the prediction at tau = 0 equal the initial state exactly.
"""

from dataclasses import dataclass
from typing import List, Literal, NamedTuple, Optional, Tuple, Union

import numpy as np

from softpinn.config.config import Boundaries
from softpinn.dynamics.types import Domain
from softpinn.errors import DimensionMismatchError, NonFinitePredictionError
from softpinn.networks.ansatz import (
    AnsatzPass,
    ansatz_backward,
    ansatz_dt,
    ansatz_eval,
    ansatz_pass,
    ansatz_width,
)
from softpinn.networks.mlp import (
    MLPCache,
    MLPWeights,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from softpinn.networks.scaler import Scaler, inflated_scaler

HeadKind = Literal["pinc", "ddpinn"]


@dataclass(eq=False)
class SurrogateModel:
    n: int
    """Joint count"""
    head: HeadKind
    n_a: int
    """Ansatz terms per state channel; 0 for the PINC head"""
    T_s: float
    """Horizon the surrogate was trained for, s"""
    boundaries: Boundaries
    scaler: Scaler
    core: MLPWeights

    def __post_init__(self) -> None:
        if self.head == "pinc" and self.n_a != 0:
            raise ValueError("the PINC head takes no ansatz terms")
        if self.head == "ddpinn" and self.n_a < 1:
            raise ValueError("the DD-PINN head needs at least one ansatz term")
        if self.scaler.n != self.n:
            raise DimensionMismatchError(
                f"scaler is for {self.scaler.n} joints, model for {self.n}"
            )
        if self.core.n_in != self.core_input_width:
            raise DimensionMismatchError(
                f"{self.head} core must take {self.core_input_width} inputs, has {self.core.n_in}"
            )
        if self.core.n_out != self.core_output_width:
            raise DimensionMismatchError(
                f"{self.head} core must give {self.core_output_width} outputs, has {self.core.n_out}"
            )

    @property
    def dim(self) -> int:
        """State width 2n"""
        return 2 * self.n

    @property
    def kappa(self) -> float:
        return self.boundaries.kappa

    @property
    def core_input_width(self) -> int:
        width = 2 * self.dim + 2
        return width + 1 if self.head == "pinc" else width

    @property
    def core_output_width(self) -> int:
        if self.head == "pinc":
            return self.dim
        return ansatz_width(self.dim, self.n_a)


def init_surrogate(
    n: int,
    /,
    *,
    head: HeadKind,
    n_a: int,
    n_n: int,
    n_h: int,
    T_s: float,
    boundaries: Boundaries,
    rng: np.random.Generator,
) -> SurrogateModel:
    """A freshly initialized surrogate on the inflated boundaries"""
    scaler = inflated_scaler(n, T_s, boundaries)
    n_in = 4 * n + (3 if head == "pinc" else 2)
    n_out = 2 * n if head == "pinc" else ansatz_width(2 * n, n_a)
    core = init_mlp([n_in] + [n_n] * n_h + [n_out], rng)
    return SurrogateModel(
        n=n,
        head=head,
        n_a=n_a if head == "ddpinn" else 0,
        T_s=T_s,
        boundaries=boundaries,
        scaler=scaler,
        core=core,
    )


def core_inputs(
    model: SurrogateModel,
    tau: np.ndarray,
    X0s: np.ndarray,
    U0s: np.ndarray,
    Ds: np.ndarray,
) -> np.ndarray:
    """Core input rows from scaled initial states, inputs and domains; the
    PINC head also takes the scaled time as its first column
    """
    parts = [X0s, U0s, Ds]
    if model.head == "pinc":
        t_s = 2.0 * np.asarray(tau, dtype=np.float64) / model.kappa - 1.0
        parts.insert(0, t_s.reshape(-1, 1))
    return np.hstack(parts)


def _time_direction(model: SurrogateModel) -> np.ndarray:
    direction = np.zeros(model.core_input_width)
    direction[0] = 1.0
    return direction


class SurrogatePass(NamedTuple):
    x_s: np.ndarray
    """(B, 2n) scaled prediction"""
    rate_s: Optional[np.ndarray]
    """(B, 2n) derivative of the scaled prediction wrt tau"""
    mlp: MLPCache
    ansatz: Optional[AnsatzPass]
    """Only for the DD-PINN head"""


def surrogate_forward(
    model: SurrogateModel,
    tau: np.ndarray,
    X0s: np.ndarray,
    U0s: np.ndarray,
    Ds: np.ndarray,
    /,
    *,
    rate: bool,
) -> SurrogatePass:
    """Scaled prediction of B rows at horizon fractions tau (B,), keeping
    what surrogate_backward needs; with `rate` also d x_s / d tau
    """
    tau = np.asarray(tau, dtype=np.float64)
    Z = core_inputs(model, tau, X0s, U0s, Ds)
    if model.head == "pinc":
        out, cache = mlp_forward(
            model.core, Z, direction=_time_direction(model) if rate else None
        )
        rate_s = None
        if rate:
            assert cache.tangent_out is not None
            rate_s = cache.tangent_out * (2.0 / model.kappa)
        return SurrogatePass(x_s=out, rate_s=rate_s, mlp=cache, ansatz=None)

    alpha, cache = mlp_forward(model.core, Z)
    fwd = ansatz_pass(alpha, tau, model.dim)
    return SurrogatePass(
        x_s=X0s + fwd.value,
        rate_s=fwd.rate if rate else None,
        mlp=cache,
        ansatz=fwd,
    )


class SurrogateGrads(NamedTuple):
    params: List[np.ndarray]
    """Core parameter gradients in `MLPWeights.parameters()` order"""
    x0: np.ndarray
    """(B, 2n) gradient wrt the scaled initial states"""
    u0: np.ndarray
    """(B, 2n) gradient wrt the scaled inputs"""
    delta: np.ndarray
    """(B, 2) gradient wrt the scaled domains"""


def surrogate_backward(
    model: SurrogateModel,
    fwd: SurrogatePass,
    g_x: np.ndarray,
    g_rate: Optional[np.ndarray] = None,
) -> SurrogateGrads:
    """Reverse sweep for a loss with gradients g_x wrt the scaled prediction
    and optionally g_rate wrt its tau derivative
    """
    dim = model.dim
    if model.head == "pinc":
        g_tangent = None if g_rate is None else g_rate * (2.0 / model.kappa)
        params, gZ = mlp_backward(model.core, fwd.mlp, g_x, g_tangent)
        return SurrogateGrads(
            params=params,
            x0=gZ[:, 1 : 1 + dim],
            u0=gZ[:, 1 + dim : 1 + 2 * dim],
            delta=gZ[:, 1 + 2 * dim :],
        )

    assert fwd.ansatz is not None
    g_alpha = ansatz_backward(
        fwd.ansatz, g_x, np.zeros_like(g_x) if g_rate is None else g_rate
    )
    params, gZ = mlp_backward(model.core, fwd.mlp, g_alpha)
    return SurrogateGrads(
        params=params,
        x0=g_x + gZ[:, :dim],
        u0=gZ[:, dim : 2 * dim],
        delta=gZ[:, 2 * dim :],
    )


def predict_scaled(
    model: SurrogateModel,
    tau: np.ndarray,
    X0s: np.ndarray,
    U0s: np.ndarray,
    Ds: np.ndarray,
) -> np.ndarray:
    """Scaled prediction without any bookkeeping for gradients"""
    tau = np.asarray(tau, dtype=np.float64)
    out, _ = mlp_forward(model.core, core_inputs(model, tau, X0s, U0s, Ds))
    if model.head == "pinc":
        return out
    return X0s + ansatz_eval(out, tau, model.dim)


def rate_scaled(
    model: SurrogateModel,
    tau: np.ndarray,
    X0s: np.ndarray,
    U0s: np.ndarray,
    Ds: np.ndarray,
) -> np.ndarray:
    """d x_s / d tau without any bookkeeping for gradients"""
    tau = np.asarray(tau, dtype=np.float64)
    Z = core_inputs(model, tau, X0s, U0s, Ds)
    if model.head == "pinc":
        _, cache = mlp_forward(model.core, Z, direction=_time_direction(model))
        assert cache.tangent_out is not None
        return cache.tangent_out * (2.0 / model.kappa)
    alpha, _ = mlp_forward(model.core, Z)
    return ansatz_dt(alpha, tau, model.dim)


DomainLike = Union[Domain, np.ndarray]


def _scaled_rows(
    model: SurrogateModel,
    t: Union[float, np.ndarray],
    x0: np.ndarray,
    u0: np.ndarray,
    delta: DomainLike,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, bool]:
    x0 = np.asarray(x0, dtype=np.float64)
    single = x0.ndim == 1
    X0 = np.atleast_2d(x0)
    B = X0.shape[0]
    U0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    D = delta.as_array() if isinstance(delta, Domain) else np.asarray(delta, dtype=np.float64)
    D = np.broadcast_to(np.atleast_2d(D), (B, 2))
    if X0.shape != (B, model.dim) or U0.shape != (B, model.dim):
        raise DimensionMismatchError(
            f"states and inputs must have width {model.dim}, got {X0.shape} and {U0.shape}"
        )
    tau = np.broadcast_to(np.asarray(t, dtype=np.float64) / model.T_s, (B,))
    return (
        tau,
        model.scaler.x.scale(X0),
        model.scaler.u.scale(U0),
        model.scaler.delta.scale(D),
        single,
    )


def surrogate_predict(
    model: SurrogateModel,
    t: Union[float, np.ndarray],
    x0: np.ndarray,
    u0: np.ndarray,
    delta: DomainLike,
) -> np.ndarray:
    """The state t seconds after x0 with the pressures held at u0. Takes a
    single state (2n,) or rows (B, 2n); delta is a Domain or [m_e, beta_g]
    row(s).
    """
    tau, X0s, U0s, Ds, single = _scaled_rows(model, t, x0, u0, delta)
    x = model.scaler.x.unscale(predict_scaled(model, tau, X0s, U0s, Ds))
    return x[0] if single else x


def surrogate_dt(
    model: SurrogateModel,
    t: Union[float, np.ndarray],
    x0: np.ndarray,
    u0: np.ndarray,
    delta: DomainLike,
) -> np.ndarray:
    """Time derivative of surrogate_predict, in rad/s and rad/s²"""
    tau, X0s, U0s, Ds, single = _scaled_rows(model, t, x0, u0, delta)
    rate = rate_scaled(model, tau, X0s, U0s, Ds) / (model.scaler.x.factor * model.T_s)
    return rate[0] if single else rate


def self_loop_rollout(
    model: SurrogateModel,
    x0: np.ndarray,
    u_traj: np.ndarray,
    delta: DomainLike,
) -> np.ndarray:
    """Feeds every prediction back as the next initial state: returns
    (K + 1, 2n) states on the T_s grid for K held inputs

    Raises:
        NonFinitePredictionError: a prediction was not finite
    """
    x0 = np.asarray(x0, dtype=np.float64)
    U = np.atleast_2d(np.asarray(u_traj, dtype=np.float64))
    if U.shape[0] == 0:
        raise ValueError("need at least one input")
    if x0.shape != (model.dim,) or U.shape[1] != model.dim:
        raise DimensionMismatchError(
            f"x0 must have shape ({model.dim},) and inputs width {model.dim}"
        )
    D = delta.as_array() if isinstance(delta, Domain) else np.asarray(delta, dtype=np.float64)
    Ds = model.scaler.delta.scale(D.reshape(1, 2))
    Us = model.scaler.u.scale(U)
    tau = np.ones(1)
    states_s = np.empty((U.shape[0] + 1, model.dim))
    states_s[0] = model.scaler.x.scale(x0)
    for k in range(U.shape[0]):
        nxt = predict_scaled(model, tau, states_s[k : k + 1], Us[k : k + 1], Ds)
        if not np.all(np.isfinite(nxt)):
            raise NonFinitePredictionError(
                f"prediction {k} is not finite", step_index=k
            )
        states_s[k + 1] = nxt[0]
    states = model.scaler.x.unscale(states_s)
    states[0] = x0
    return states
