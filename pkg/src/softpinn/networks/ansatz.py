"""Damped harmonic ansatz of the domain-decoupled surrogate.

For every state channel the ansatz is a sum of n_a terms

    alpha1 * (exp(-alpha4 t) sin(alpha2 t + alpha3) - sin(alpha3))

which vanishes at t = 0 for any coefficients. The coefficient vector is
laid out as [alpha1; alpha2; alpha3; alpha4], each block holding n_a
vectors of the state width, so a row of width 4 * n_a * dim reshapes to
(4, n_a, dim).
"""

from typing import NamedTuple, Tuple

import numpy as np

from softpinn.errors import DimensionMismatchError


def ansatz_width(dim: int, n_a: int) -> int:
    return 4 * dim * n_a


def _split(alpha: np.ndarray, dim: int) -> Tuple[np.ndarray, ...]:
    alpha = np.asarray(alpha, dtype=np.float64)
    width = alpha.shape[-1]
    if width % (4 * dim) != 0:
        raise DimensionMismatchError(
            f"ansatz vector width {width} is not a multiple of 4 * {dim}"
        )
    n_a = width // (4 * dim)
    blocks = alpha.reshape(alpha.shape[:-1] + (4, n_a, dim))
    return tuple(blocks[..., j, :, :] for j in range(4))


def _time(t: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """t broadcast against the (..., n_a, dim) coefficient blocks"""
    t = np.asarray(t, dtype=np.float64)
    return t.reshape(t.shape + (1, 1)) if t.ndim == alpha.ndim - 1 else t


def ansatz_eval(alpha: np.ndarray, t: np.ndarray, dim: int) -> np.ndarray:
    """a(alpha, t) for coefficient rows alpha (..., 4 n_a dim) and times t
    of shape (...) or scalar; returns (..., dim)
    """
    a1, a2, a3, a4 = _split(alpha, dim)
    t = _time(t, alpha)
    terms = a1 * (np.exp(-a4 * t) * np.sin(a2 * t + a3) - np.sin(a3))
    return terms.sum(axis=-2)


def ansatz_dt(alpha: np.ndarray, t: np.ndarray, dim: int) -> np.ndarray:
    """Time derivative of ansatz_eval"""
    a1, a2, a3, a4 = _split(alpha, dim)
    t = _time(t, alpha)
    phase = a2 * t + a3
    terms = a1 * np.exp(-a4 * t) * (a2 * np.cos(phase) - a4 * np.sin(phase))
    return terms.sum(axis=-2)


class AnsatzPass(NamedTuple):
    value: np.ndarray
    """(B, dim) a(alpha, t)"""
    rate: np.ndarray
    """(B, dim) da/dt"""
    jac_value: np.ndarray
    """(B, 4, n_a, dim) derivative of each value channel wrt its coefficients"""
    jac_rate: np.ndarray
    """(B, 4, n_a, dim) derivative of each rate channel wrt its coefficients"""


def ansatz_pass(alpha: np.ndarray, t: np.ndarray, dim: int) -> AnsatzPass:
    """Value, time derivative and their coefficient derivatives for rows
    alpha (B, 4 n_a dim) at times t (B,). Each channel only depends on its
    own coefficients, so the Jacobians are stored elementwise.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2:
        raise DimensionMismatchError("coefficients must be rows (B, 4 n_a dim)")
    a1, a2, a3, a4 = _split(alpha, dim)
    t = _time(t, alpha)
    E = np.exp(-a4 * t)
    phase = a2 * t + a3
    s = np.sin(phase)
    c = np.cos(phase)
    s3 = np.sin(a3)
    c3 = np.cos(a3)
    oscillation = a2 * c - a4 * s
    t_full = np.broadcast_to(t, a1.shape)

    jac_value = np.stack(
        [
            E * s - s3,
            a1 * E * c * t_full,
            a1 * (E * c - c3),
            -t_full * a1 * E * s,
        ],
        axis=1,
    )
    jac_rate = np.stack(
        [
            E * oscillation,
            a1 * E * (c - t_full * (a4 * c + a2 * s)),
            a1 * E * (-a2 * s - a4 * c),
            a1 * E * (-t_full * oscillation - s),
        ],
        axis=1,
    )
    return AnsatzPass(
        value=(a1 * (E * s - s3)).sum(axis=1),
        rate=(a1 * E * oscillation).sum(axis=1),
        jac_value=jac_value,
        jac_rate=jac_rate,
    )


def ansatz_backward(
    fwd: AnsatzPass, g_value: np.ndarray, g_rate: np.ndarray
) -> np.ndarray:
    """Gradient wrt the coefficient rows (B, 4 n_a dim) given the gradients
    wrt value and rate (B, dim)
    """
    g = fwd.jac_value * g_value[:, None, None, :] + fwd.jac_rate * g_rate[:, None, None, :]
    return g.reshape(g.shape[0], -1)
