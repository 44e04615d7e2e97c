"""Receding-horizon control over the surrogate with a control horizon of one.

One scaled input u0 is held over m prediction steps of T_s each; the cost
weighs the tracking error of every predicted state against the reference
window and the size of the input, all in scaled units. The box-constrained
problem is solved with L-BFGS-B on the analytic gradient.
"""

import logging
import time
from typing import TYPE_CHECKING, List, Literal, NamedTuple, Optional, Type

import numpy as np
import scipy.optimize

from softpinn.config.config import MPCConfig, MPCConfigFromValues
from softpinn.control.closed_loop import ControlUpdate, Controller
from softpinn.control.reference import Reference
from softpinn.dynamics.types import Domain
from softpinn.errors import DimensionMismatchError, NonFinitePredictionError
from softpinn.networks.surrogate import (
    SurrogateModel,
    SurrogatePass,
    surrogate_backward,
    surrogate_forward,
)

MPCStatus = Literal["improved", "warm_start"]


class MPCCost(NamedTuple):
    cost: float
    gradient: np.ndarray
    """(2n,) gradient wrt the scaled input"""


def input_box(model: SurrogateModel, p_max: float) -> np.ndarray:
    """(2, 2n) scaled [u_min, u_max] for pressures in [0, p_max]"""
    dim = model.dim
    return model.scaler.u.scale(np.stack([np.zeros(dim), np.full(dim, p_max)]))


def default_mpc_config(
    model: SurrogateModel,
    p_max: float,
    /,
    *,
    m: int = 3,
    Q_sq: float = 0.7,
    Q_sqd: float = 0.01,
    Q_tq: float = 0.7,
    Q_tqd: float = 0.01,
    R_s: float = 0.01,
    max_iterations: int = 30,
    tolerance: float = 1e-6,
) -> MPCConfigFromValues:
    box = input_box(model, p_max)
    return MPCConfigFromValues(
        m=m,
        Q_sq=Q_sq,
        Q_sqd=Q_sqd,
        Q_tq=Q_tq,
        Q_tqd=Q_tqd,
        R_s=R_s,
        u_min=box[0],
        u_max=box[1],
        max_iterations=max_iterations,
        tolerance=tolerance,
    )


def _weights(n: int, position: float, velocity: float) -> np.ndarray:
    return np.concatenate([np.full(n, position), np.full(n, velocity)])


def mpc_cost(
    u0_s: np.ndarray,
    x0: np.ndarray,
    ref_window: np.ndarray,
    delta: Domain,
    model: SurrogateModel,
    config: MPCConfig,
) -> MPCCost:
    """Cost of holding the scaled input u0_s from the measured state x0 over
    the m desired states of ref_window (SI units), with its gradient

    Raises:
        NonFinitePredictionError: the prediction left the finite range
    """
    m = config.m
    dim = model.dim
    n = model.n
    ref_window = np.asarray(ref_window, dtype=np.float64)
    if ref_window.shape != (m, dim):
        raise DimensionMismatchError(
            f"reference window must have shape ({m}, {dim}), got {ref_window.shape}"
        )
    u_s = np.asarray(u0_s, dtype=np.float64).reshape(1, dim)
    scaler = model.scaler
    ref_s = scaler.x.scale(ref_window)
    D_s = scaler.delta.scale(delta.as_array().reshape(1, 2))
    stage = _weights(n, config.Q_sq, config.Q_sqd)
    terminal = _weights(n, config.Q_tq, config.Q_tqd)
    tau = np.ones(1)

    x_s = scaler.x.scale(np.asarray(x0, dtype=np.float64).reshape(1, dim))
    passes: List[SurrogatePass] = []
    errors = np.empty((m, dim))
    for k in range(m):
        fwd = surrogate_forward(model, tau, x_s, u_s, D_s, rate=False)
        x_s = fwd.x_s
        if not np.all(np.isfinite(x_s)):
            raise NonFinitePredictionError(
                f"prediction {k + 1} of the horizon is not finite", step_index=k
            )
        passes.append(fwd)
        errors[k] = ref_s[k] - x_s[0]

    weights = np.vstack([np.tile(stage, (m - 1, 1)), terminal[None, :]])
    cost = float(np.sum(weights * errors**2) + m * config.R_s * np.sum(u_s**2))

    gradient = 2.0 * m * config.R_s * u_s[0]
    g_next = np.zeros((1, dim))
    for k in range(m - 1, -1, -1):
        g_x = -2.0 * (weights[k] * errors[k])[None, :] + g_next
        grads = surrogate_backward(model, passes[k], g_x)
        gradient = gradient + grads.u0[0]
        g_next = grads.x0
    return MPCCost(cost=cost, gradient=gradient)


class MPCSolution(NamedTuple):
    u_s: np.ndarray
    """(2n,) optimal scaled input"""
    u: np.ndarray
    """(2n,) optimal pressures, Pa"""
    cost: float
    status: MPCStatus
    iterations: int
    solve_time: float
    """Wall time of the solve, s"""


def mpc_solve(
    x0: np.ndarray,
    ref_window: np.ndarray,
    delta: Domain,
    model: SurrogateModel,
    config: MPCConfig,
    warm_start: Optional[np.ndarray] = None,
) -> MPCSolution:
    """Minimizes mpc_cost within [u_min, u_max]. Without a warm start the
    solve starts from the middle of the box. When no iterate beats the warm
    start, the warm start is returned with status `warm_start`.
    """
    started = time.perf_counter()
    lower = np.asarray(config.u_min, dtype=np.float64)
    upper = np.asarray(config.u_max, dtype=np.float64)
    u_start = (
        0.5 * (lower + upper)
        if warm_start is None
        else np.clip(np.asarray(warm_start, dtype=np.float64), lower, upper)
    )

    def objective(u_s: np.ndarray) -> tuple:
        value = mpc_cost(u_s, x0, ref_window, delta, model, config)
        return value.cost, value.gradient

    start_cost = objective(u_start)[0]
    if logging.getLogger().isEnabledFor(logging.DEBUG):
        error = scipy.optimize.check_grad(
            lambda u: objective(u)[0], lambda u: objective(u)[1], u_start
        )
        logging.debug(f"mpc gradient check at the warm start: {error:.3e}")

    result = scipy.optimize.minimize(
        objective,
        u_start,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lower, upper)),
        options={"maxiter": config.max_iterations, "gtol": config.tolerance},
    )
    u_best = np.clip(result.x, lower, upper)
    best_cost = float(result.fun)
    status: MPCStatus = "improved"
    if not best_cost < start_cost:
        logging.debug(f"mpc solve did not improve on the warm start ({result.message})")
        u_best = u_start
        best_cost = start_cost
        status = "warm_start"
    return MPCSolution(
        u_s=u_best,
        u=model.scaler.u.unscale(u_best),
        cost=best_cost,
        status=status,
        iterations=int(result.nit),
        solve_time=time.perf_counter() - started,
    )


class MPCController:
    """Solves once per update and warm-starts from the previous solution.
    With `measured` timing the command is held for the larger of T_s and
    the solve time; with `fixed` timing always for T_s.
    """

    name = "mpc"

    def __init__(
        self,
        model: SurrogateModel,
        config: MPCConfig,
        delta: Domain,
        /,
        *,
        timing: Literal["measured", "fixed"] = "measured",
    ) -> None:
        self.model = model
        self.config = config
        self.delta = delta
        self.timing = timing
        self.warm_start: Optional[np.ndarray] = None

    def reset(self) -> None:
        self.warm_start = None

    def update(self, t: float, x: np.ndarray, reference: Reference) -> ControlUpdate:
        window = reference.window(t, self.config.m, self.model.T_s)
        solution = mpc_solve(x, window, self.delta, self.model, self.config, self.warm_start)
        self.warm_start = solution.u_s
        hold = self.model.T_s
        if self.timing == "measured":
            hold = max(hold, solution.solve_time)
        return ControlUpdate(
            u=solution.u,
            hold=hold,
            solve_time=solution.solve_time,
            warm_start=solution.status == "warm_start",
        )


if TYPE_CHECKING:
    _: Type[Controller] = MPCController
