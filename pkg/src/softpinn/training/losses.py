"""Mean-squared training losses of the surrogate and their gradients.

All three losses are means over rows and state channels in scaled units.
The physics residual compares the surrogate's rate in horizons,
d x_s / d tau, with the first-principles derivative converted to the same
units, T_s * D_x * f(x, u, delta), where D_x is the state scaling factor.
"""

import logging
from typing import List, NamedTuple, Optional

import numpy as np

from softpinn.dynamics.model import BatchedDynamics
from softpinn.networks.surrogate import (
    SurrogateModel,
    surrogate_backward,
    surrogate_forward,
)
from softpinn.training.collocation import CollocationSet, TransitionSet

EXCLUDED_WARNING_FRACTION = 0.01
"""Share of excluded collocation rows above which a batch is flagged"""


class LossValue(NamedTuple):
    loss: float
    grads: Optional[List[np.ndarray]]
    """Core parameter gradients, when requested"""
    excluded: int
    """Rows left out because the dynamics could not be evaluated there"""


def _zero(model: SurrogateModel, grad: bool) -> LossValue:
    return LossValue(
        loss=0.0,
        grads=[np.zeros_like(p) for p in model.core.parameters()] if grad else None,
        excluded=0,
    )


def physics_loss(
    model: SurrogateModel,
    fp: BatchedDynamics,
    points: CollocationSet,
    /,
    *,
    grad: bool,
) -> LossValue:
    """Residual of the state-space model along the surrogate's prediction,
    with the input held at u0
    """
    if len(points) == 0:
        return _zero(model, grad)
    scaler = model.scaler
    tau = points.tau(model.kappa)
    fwd = surrogate_forward(model, tau, points.x0, points.u0, points.delta, rate=True)
    assert fwd.rate_s is not None
    X = scaler.x.unscale(fwd.x_s)
    U = scaler.u.unscale(points.u0)
    D = scaler.delta.unscale(points.delta)
    result = fp.evaluate(X, U, D, jacobian=grad)
    ok = result.ok & np.all(np.isfinite(fwd.x_s), axis=1)
    excluded = int(np.count_nonzero(~ok))
    if excluded > EXCLUDED_WARNING_FRACTION * len(points):
        logging.warning(
            f"physics loss excluded {excluded} of {len(points)} collocation rows"
        )
    kept = int(np.count_nonzero(ok))
    if kept == 0:
        zero = _zero(model, grad)
        return zero._replace(excluded=excluded)

    factor = scaler.x.factor
    target = model.T_s * factor * result.derivative
    residual = np.where(ok[:, None], fwd.rate_s - np.where(ok[:, None], target, 0.0), 0.0)
    loss = float(np.sum(residual**2) / (kept * model.dim))
    if not grad:
        return LossValue(loss=loss, grads=None, excluded=excluded)

    assert result.jacobian is not None
    g_rate = 2.0 * residual / (kept * model.dim)
    # d target_i / d x_s,k = T_s * D_i * J_ik / D_k
    J = np.where(ok[:, None, None], result.jacobian, 0.0)
    g_state = -np.einsum("bi,bik->bk", g_rate * model.T_s * factor, J) / factor
    grads = surrogate_backward(model, fwd, g_state, g_rate)
    return LossValue(loss=loss, grads=grads.params, excluded=excluded)


def ic_loss(
    model: SurrogateModel, points: Optional[CollocationSet], /, *, grad: bool
) -> LossValue:
    """Mismatch between the prediction at t = 0 and the initial state. The
    DD-PINN head meets the initial condition by construction and always
    gives zero.
    """
    if model.head == "ddpinn" or points is None or len(points) == 0:
        return _zero(model, grad)
    tau = np.zeros(len(points))
    fwd = surrogate_forward(model, tau, points.x0, points.u0, points.delta, rate=False)
    error = fwd.x_s - points.x0
    count = error.size
    loss = float(np.sum(error**2) / count)
    if not grad:
        return LossValue(loss=loss, grads=None, excluded=0)
    grads = surrogate_backward(model, fwd, 2.0 * error / count)
    return LossValue(loss=loss, grads=grads.params, excluded=0)


def data_loss(
    model: SurrogateModel, data: Optional[TransitionSet], /, *, grad: bool
) -> LossValue:
    """Mismatch between the one-horizon prediction and measured transitions"""
    if data is None or len(data) == 0:
        return _zero(model, grad)
    tau = np.ones(len(data))
    fwd = surrogate_forward(model, tau, data.x0, data.u0, data.delta, rate=False)
    error = fwd.x_s - data.x1
    count = error.size
    loss = float(np.sum(error**2) / count)
    if not grad:
        return LossValue(loss=loss, grads=None, excluded=0)
    grads = surrogate_backward(model, fwd, 2.0 * error / count)
    return LossValue(loss=loss, grads=grads.params, excluded=0)


def calibrate_weights(mean_train_losses: np.ndarray, /, *, head: str) -> np.ndarray:
    """Loss weights [eta_d, eta_p, eta_0] that bring every active loss to the
    size of the largest one; inactive (zero) losses get weight zero and the
    DD-PINN initial-condition weight is the largest loss itself
    """
    losses = np.asarray(mean_train_losses, dtype=np.float64)
    if losses.shape != (3,) or np.any(losses < 0):
        raise ValueError(f"need three nonnegative mean losses, got {losses}")
    largest = float(np.max(losses))
    if largest == 0.0:
        return np.ones(3)
    eta = np.zeros(3)
    active = losses > 0
    eta[active] = largest / losses[active]
    if head == "ddpinn":
        eta[2] = largest
    return eta
