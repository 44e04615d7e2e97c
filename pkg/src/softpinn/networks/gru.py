"""Stacked gated recurrent baseline predicting one horizon per step.

Each step reads the scaled state and input [x_s, u_s], updates the hidden
state of every layer and reads the next scaled state off the top layer with
a linear map. Gate columns are ordered [reset, update, candidate].
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from softpinn.dynamics.types import Domain
from softpinn.errors import DimensionMismatchError, NonFinitePredictionError, StaleCacheError
from softpinn.networks.scaler import Scaler


def sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * values) + 1.0)


@dataclass(eq=False)
class GRULayer:
    W_x: np.ndarray
    """(n_in, 3H) input weights"""
    W_h: np.ndarray
    """(H, 3H) recurrent weights"""
    b: np.ndarray
    """(3H,)"""

    @property
    def hidden(self) -> int:
        return self.W_h.shape[0]


@dataclass(eq=False)
class GRUWeights:
    layers: List[GRULayer]
    W_out: np.ndarray
    """(H, 2n) readout"""
    b_out: np.ndarray
    """(2n,)"""
    scaler: Scaler
    """Only the state and input ranges are used"""
    T_s: float
    """Step of the recurrence, s"""
    version: int = field(default=0)

    def __post_init__(self) -> None:
        if not self.layers:
            raise DimensionMismatchError("need at least one recurrent layer")
        n_in = 2 * self.scaler.x.width
        for i, layer in enumerate(self.layers):
            H = layer.hidden
            if layer.W_x.shape != (n_in, 3 * H) or layer.W_h.shape != (H, 3 * H) or layer.b.shape != (3 * H,):
                raise DimensionMismatchError(
                    f"layer {i} has W_x {layer.W_x.shape}, W_h {layer.W_h.shape}, b {layer.b.shape}"
                )
            n_in = H
        if self.W_out.shape != (n_in, self.scaler.x.width) or self.b_out.shape != (self.scaler.x.width,):
            raise DimensionMismatchError(
                f"readout must map {n_in} to {self.scaler.x.width}, got {self.W_out.shape}"
            )

    @property
    def n(self) -> int:
        return self.scaler.n

    @property
    def n_h(self) -> int:
        return len(self.layers)

    @property
    def hidden(self) -> int:
        return self.layers[0].hidden

    def parameters(self) -> List[np.ndarray]:
        """W_x, W_h, b of every layer, then W_out, b_out"""
        result: List[np.ndarray] = []
        for layer in self.layers:
            result.extend([layer.W_x, layer.W_h, layer.b])
        result.extend([self.W_out, self.b_out])
        return result

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "GRUWeights":
        return GRUWeights(
            layers=[GRULayer(l.W_x.copy(), l.W_h.copy(), l.b.copy()) for l in self.layers],
            W_out=self.W_out.copy(),
            b_out=self.b_out.copy(),
            scaler=self.scaler,
            T_s=self.T_s,
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def zero_state(self, batch: int = 1) -> np.ndarray:
        """(B, n_h, H) hidden state of a fresh sequence"""
        return np.zeros((batch, self.n_h, self.hidden))


def init_gru(
    scaler: Scaler,
    T_s: float,
    /,
    *,
    hidden: int,
    n_h: int,
    rng: np.random.Generator,
) -> GRUWeights:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights and biases"""
    limit = 1.0 / np.sqrt(hidden)
    dim = scaler.x.width
    layers = []
    n_in = 2 * dim
    for _ in range(n_h):
        layers.append(
            GRULayer(
                W_x=rng.uniform(-limit, limit, (n_in, 3 * hidden)),
                W_h=rng.uniform(-limit, limit, (hidden, 3 * hidden)),
                b=rng.uniform(-limit, limit, 3 * hidden),
            )
        )
        n_in = hidden
    return GRUWeights(
        layers=layers,
        W_out=rng.uniform(-limit, limit, (hidden, dim)),
        b_out=np.zeros(dim),
        scaler=scaler,
        T_s=T_s,
    )


class _LayerCache(NamedTuple):
    a: np.ndarray
    """layer input"""
    h: np.ndarray
    """previous hidden state"""
    r: np.ndarray
    z: np.ndarray
    c: np.ndarray
    """candidate"""
    ah_c: np.ndarray
    """recurrent part of the candidate pre-activation, before the reset gate"""


class GRUStepCache(NamedTuple):
    version: int
    layers: List[_LayerCache]
    masks: Optional[List[np.ndarray]]
    """Dropout mask applied to the output of every layer but the top one"""
    top: np.ndarray
    """(B, H) output of the top layer"""


def _layer_forward(layer: GRULayer, a: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, _LayerCache]:
    H = layer.hidden
    ax = a @ layer.W_x + layer.b
    ah = h @ layer.W_h
    r = sigmoid(ax[:, :H] + ah[:, :H])
    z = sigmoid(ax[:, H : 2 * H] + ah[:, H : 2 * H])
    ah_c = ah[:, 2 * H :]
    c = np.tanh(ax[:, 2 * H :] + r * ah_c)
    return (1.0 - z) * c + z * h, _LayerCache(a=a, h=h, r=r, z=z, c=c, ah_c=ah_c)


def _layer_backward(
    layer: GRULayer, cache: _LayerCache, g: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns gradients wrt W_x, W_h, b, the layer input and the previous
    hidden state
    """
    r, z, c = cache.r, cache.z, cache.c
    g_pre_c = g * (1.0 - z) * (1.0 - c**2)
    g_pre_z = g * (cache.h - c) * z * (1.0 - z)
    g_pre_r = g_pre_c * cache.ah_c * r * (1.0 - r)
    g_ax = np.hstack([g_pre_r, g_pre_z, g_pre_c])
    g_ah = np.hstack([g_pre_r, g_pre_z, g_pre_c * r])
    return (
        cache.a.T @ g_ax,
        cache.h.T @ g_ah,
        g_ax.sum(axis=0),
        g_ax @ layer.W_x.T,
        g * z + g_ah @ layer.W_h.T,
    )


def gru_step_forward(
    w: GRUWeights,
    h: np.ndarray,
    x_s: np.ndarray,
    u_s: np.ndarray,
    masks: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray, GRUStepCache]:
    """One step on scaled rows: h (B, n_h, H), x_s and u_s (B, 2n). Returns
    the next hidden state, the scaled prediction and the cache.
    """
    if h.ndim != 3 or h.shape[1:] != (w.n_h, w.hidden):
        raise DimensionMismatchError(f"hidden state must be (B, {w.n_h}, {w.hidden}), got {h.shape}")
    a = np.hstack([x_s, u_s])
    if a.shape != (h.shape[0], 2 * w.scaler.x.width):
        raise DimensionMismatchError(f"state and input rows do not match the hidden state batch {h.shape[0]}")
    h_next = np.empty_like(h)
    caches = []
    for i, layer in enumerate(w.layers):
        h_i, cache = _layer_forward(layer, a, h[:, i, :])
        h_next[:, i, :] = h_i
        caches.append(cache)
        a = h_i if masks is None or i == w.n_h - 1 else h_i * masks[i]
    x_next = a @ w.W_out + w.b_out
    return h_next, x_next, GRUStepCache(
        version=w.version,
        layers=caches,
        masks=None if masks is None else list(masks),
        top=a,
    )


def gru_step_backward(
    w: GRUWeights,
    cache: GRUStepCache,
    g_h_next: np.ndarray,
    g_x_next: np.ndarray,
) -> Tuple[List[np.ndarray], np.ndarray, np.ndarray, np.ndarray]:
    """Reverse of gru_step_forward given gradients wrt the next hidden state
    (B, n_h, H) and the scaled prediction (B, 2n). Returns the parameter
    gradients in `parameters()` order and the gradients wrt h, x_s and u_s.
    """
    if cache.version != w.version:
        raise StaleCacheError(
            f"cache from weights version {cache.version}, weights are at {w.version}"
        )
    grads: List[np.ndarray] = [np.empty(0)] * (3 * w.n_h + 2)
    grads[-2] = cache.top.T @ g_x_next
    grads[-1] = g_x_next.sum(axis=0)
    g_a = g_x_next @ w.W_out.T
    g_h = np.empty_like(g_h_next)
    for i in range(w.n_h - 1, -1, -1):
        g_out = g_h_next[:, i, :] + g_a
        gW_x, gW_h, gb, g_a, g_h[:, i, :] = _layer_backward(w.layers[i], cache.layers[i], g_out)
        grads[3 * i : 3 * i + 3] = [gW_x, gW_h, gb]
        if i > 0 and cache.masks is not None:
            g_a = g_a * cache.masks[i - 1]
    dim = w.scaler.x.width
    return grads, g_h, g_a[:, :dim], g_a[:, dim:]


def dropout_masks(
    w: GRUWeights, batch: int, rate: float, rng: np.random.Generator
) -> List[np.ndarray]:
    """Inverted dropout masks for the outputs of all but the top layer"""
    keep = 1.0 - rate
    return [
        (rng.random((batch, w.hidden)) < keep) / keep for _ in range(w.n_h - 1)
    ]


def gru_step(
    w: GRUWeights, h: np.ndarray, x: np.ndarray, u: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """One recurrence step in SI units for a single sequence: h (n_h, H),
    x and u (2n,). Returns the next hidden state and the predicted state.
    """
    h_next, x_s, _ = gru_step_forward(
        w,
        np.asarray(h, dtype=np.float64)[None],
        w.scaler.x.scale(np.asarray(x, dtype=np.float64))[None],
        w.scaler.u.scale(np.asarray(u, dtype=np.float64))[None],
    )
    return h_next[0], w.scaler.x.unscale(x_s[0])


def gru_rollout(
    w: GRUWeights, x0: np.ndarray, u_traj: np.ndarray, delta: Optional[Domain] = None
) -> np.ndarray:
    """Free-run prediction from a zero hidden state: (K + 1, 2n) states for
    K held inputs. The recurrent baseline has no domain input; `delta` is
    accepted so it can stand in for a surrogate and is ignored.

    Raises:
        NonFinitePredictionError: a prediction was not finite
    """
    U = np.atleast_2d(np.asarray(u_traj, dtype=np.float64))
    dim = w.scaler.x.width
    if U.shape[0] == 0 or U.shape[1] != dim:
        raise DimensionMismatchError(f"need at least one input row of width {dim}")
    Us = w.scaler.u.scale(U)
    states_s = np.empty((U.shape[0] + 1, dim))
    states_s[0] = w.scaler.x.scale(np.asarray(x0, dtype=np.float64))
    h = w.zero_state()
    for k in range(U.shape[0]):
        h, x_s, _ = gru_step_forward(w, h, states_s[k : k + 1], Us[k : k + 1])
        if not np.all(np.isfinite(x_s)):
            raise NonFinitePredictionError(f"prediction {k} is not finite", step_index=k)
        states_s[k + 1] = x_s[0]
    states = w.scaler.x.unscale(states_s)
    states[0] = x0
    return states
