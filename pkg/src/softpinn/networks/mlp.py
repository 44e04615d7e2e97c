"""Feedforward tanh network with hand-written reverse-mode gradients.

Rows are samples: a layer maps A (B, fan_in) to A @ W + b with W stored
(fan_in, fan_out). Hidden layers apply tanh, the output layer is linear.
The forward pass can also carry one tangent direction through the network
(forward mode), and the backward pass then differentiates losses of both
the output and its tangent.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from softpinn.errors import DimensionMismatchError, StaleCacheError


@dataclass(eq=False)
class MLPWeights:
    weights: List[np.ndarray]
    """(fan_in, fan_out) per layer, output layer last"""
    biases: List[np.ndarray]
    """(fan_out,) per layer"""
    version: int = field(default=0)
    """Incremented whenever the parameters change in place"""

    def __post_init__(self) -> None:
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise DimensionMismatchError("need one bias per weight matrix and at least one layer")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionMismatchError(f"layer {i} has weight {w.shape} and bias {b.shape}")
            if i > 0 and w.shape[0] != self.weights[i - 1].shape[1]:
                raise DimensionMismatchError(
                    f"layer {i} expects {w.shape[0]} inputs, previous layer gives {self.weights[i - 1].shape[1]}"
                )

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_h(self) -> int:
        """Number of hidden (tanh) layers"""
        return len(self.weights) - 1

    def sizes(self) -> List[int]:
        return [self.n_in] + [w.shape[1] for w in self.weights]

    def parameters(self) -> List[np.ndarray]:
        """The parameter arrays in gradient order: W0, b0, W1, b1, ..."""
        result: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            result.append(w)
            result.append(b)
        return result

    def touch(self) -> None:
        """Marks the parameters as changed; cached passes become stale"""
        self.version += 1

    def copy(self) -> "MLPWeights":
        return MLPWeights(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


def init_mlp(sizes: Sequence[int], rng: np.random.Generator) -> MLPWeights:
    """Xavier-uniform weights and zero biases for the layer widths
    [n_in, hidden..., n_out]
    """
    if len(sizes) < 2:
        raise ValueError("need at least input and output widths")
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPWeights(weights=weights, biases=biases)


def zero_mlp(sizes: Sequence[int]) -> MLPWeights:
    return MLPWeights(
        weights=[np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
        biases=[np.zeros(b) for b in sizes[1:]],
    )


class MLPCache(NamedTuple):
    version: int
    """Weights version the pass was computed with"""
    inputs: List[np.ndarray]
    """Input of every layer: the network input, then each hidden activation"""
    tangents: Optional[List[np.ndarray]]
    """Tangent of every layer input, when a direction was given"""
    pre_tangents: Optional[List[np.ndarray]]
    """Tangent of every hidden pre-activation"""
    tangent_out: Optional[np.ndarray]
    """(B, n_out) directional derivative of the output"""


def mlp_forward(
    core: MLPWeights, X: np.ndarray, /, *, direction: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, MLPCache]:
    """Evaluates rows X (B, n_in). With `direction` (n_in,) the derivative of
    the output along it is carried forward and left in the cache.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != core.n_in:
        raise DimensionMismatchError(f"expected rows of width {core.n_in}, got {X.shape}")
    inputs = [X]
    tangents: Optional[List[np.ndarray]] = None
    pre_tangents: Optional[List[np.ndarray]] = None
    T: Optional[np.ndarray] = None
    if direction is not None:
        direction = np.asarray(direction, dtype=np.float64)
        if direction.shape != (core.n_in,):
            raise DimensionMismatchError(f"direction must have shape ({core.n_in},)")
        T = np.broadcast_to(direction, X.shape)
        tangents = [T]
        pre_tangents = []

    A = X
    for W, b in zip(core.weights[:-1], core.biases[:-1]):
        A_next = np.tanh(A @ W + b)
        if T is not None:
            assert tangents is not None and pre_tangents is not None
            S = T @ W
            T = (1.0 - A_next**2) * S
            pre_tangents.append(S)
            tangents.append(T)
        inputs.append(A_next)
        A = A_next

    out = A @ core.weights[-1] + core.biases[-1]
    tangent_out = None if T is None else T @ core.weights[-1]
    return out, MLPCache(
        version=core.version,
        inputs=inputs,
        tangents=tangents,
        pre_tangents=pre_tangents,
        tangent_out=tangent_out,
    )


def mlp_backward(
    core: MLPWeights,
    cache: MLPCache,
    g_out: np.ndarray,
    g_tangent: Optional[np.ndarray] = None,
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Reverse sweep for a scalar loss with gradient g_out wrt the output and,
    optionally, g_tangent wrt the output tangent. Returns the parameter
    gradients in `parameters()` order (summed over rows) and the gradient
    wrt the input rows.

    Raises:
        StaleCacheError: the weights changed since the forward pass
    """
    if cache.version != core.version:
        raise StaleCacheError(
            f"cache from weights version {cache.version}, weights are at {core.version}"
        )
    if g_tangent is not None and cache.tangents is None:
        raise ValueError("tangent gradient given but the forward pass had no direction")
    L = len(core.weights)
    grads: List[np.ndarray] = [np.empty(0)] * (2 * L)

    A_last = cache.inputs[-1]
    gA = g_out @ core.weights[-1].T
    gW = A_last.T @ g_out
    gT: Optional[np.ndarray] = None
    if g_tangent is not None:
        assert cache.tangents is not None
        gW = gW + cache.tangents[-1].T @ g_tangent
        gT = g_tangent @ core.weights[-1].T
    grads[2 * (L - 1)] = gW
    grads[2 * (L - 1) + 1] = g_out.sum(axis=0)

    for layer in range(L - 2, -1, -1):
        W = core.weights[layer]
        A_in = cache.inputs[layer]
        A_out = cache.inputs[layer + 1]
        D = 1.0 - A_out**2
        gZ = gA * D
        gS: Optional[np.ndarray] = None
        if gT is not None:
            assert cache.pre_tangents is not None
            gS = gT * D
            gZ = gZ - 2.0 * gT * cache.pre_tangents[layer] * A_out * D
        gW = A_in.T @ gZ
        if gS is not None:
            assert cache.tangents is not None
            gW = gW + cache.tangents[layer].T @ gS
            gT = gS @ W.T
        grads[2 * layer] = gW
        grads[2 * layer + 1] = gZ.sum(axis=0)
        gA = gZ @ W.T

    return grads, gA
